"""Priming change ratios and agreement statistics on small hand-made inputs."""

import numpy as np

from valuealign.stats import (
    EAST_ASIA_US, ScoreCube, cohen_kappa, cronbach_alpha, kappa_band, priming_summary, role_condition,
)

groups = ["CN", "JP", "KR", "US"]
control = [46.54, 56.93, 57.02, 52.88]
primed = {
    "CN": [55.96, 54.06, 61.61, 50.03],
    "JP": [47.21, 57.99, 59.33, 48.80],
    "KR": [48.92, 56.42, 58.43, 49.91],
    "US": [44.31, 54.04, 54.93, 51.71],
}

cube = ScoreCube()
for j, g in enumerate(groups):
    cube.add("demo", g, "examinee", control[j])
    for role, row in primed.items():
        cube.add("demo", g, "examinee", row[j], role_condition(role))

summary = priming_summary(cube, "demo", EAST_ASIA_US)
print("change ratio (%) by role (rows) and reference group (columns)")
print("      " + "".join(f"{g:>8s}" for g in groups))
for role in groups:
    print(f"{role:6s}" + "".join(f"{100 * summary.cells[(role, g, 'examinee')]:8.2f}" for g in groups))
print(f"\ntarget {100 * summary.target:.2f}%  aligned {100 * summary.aligned:.2f}%  "
      f"opposed {100 * summary.opposed:.2f}%")

# two annotators coding 12 expressions into three values
a = list("AABBCCAABBCC")
b = list("AABBCCABBBCA")
k = cohen_kappa(a, b)
print(f"\nCohen's kappa = {k:.3f} ({kappa_band(k)})")

# five repeated scoring runs of six examinees
rng = np.random.default_rng(0)
true_scores = rng.normal(50, 5, size=(6, 1))
runs = true_scores + rng.normal(0, 1, size=(6, 5))
print(f"Cronbach's alpha over 5 runs = {cronbach_alpha(runs):.3f}")
