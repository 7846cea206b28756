"""Build a codebook from a synthetic corpus whose value codes are known in advance."""

import numpy as np

from valuealign.codebook import OptimizerConfig, init_codebook, optimize
from valuealign.gateway import mock_gateway
from valuealign.pipeline import embed_expressions, extract_corpus
from valuealign.synthetic import planted_corpus, planted_world

# ten planted codes; every document mentions five of them among filler sentences
world = planted_world(n_codes=10, seed=0)
gateway = mock_gateway(world)
corpus = planted_corpus(world, "A", n_docs=100, codes_per_doc=5, seed=0)
print(corpus.documents[0].text[:240], "...\n")

exprs = extract_corpus(corpus.documents, gateway)
embed_expressions(exprs, gateway)
flat = [e for doc_exprs in exprs.values() for e in doc_exprs]
print(f"{len(flat)} value expressions from {corpus.size} documents")

cfg = OptimizerConfig()
cb = init_codebook(flat, cfg, gateway)
print(f"\ninitial codebook: K={cb.K}")
for code in cb.codes:
    truth = np.bincount([world.find_codes(m.text)[0] for m in code.members], minlength=10)
    print(f"  {code.name:24s} members={len(code.members):3d}  planted code {truth.argmax()} "
          f"({truth.max() / truth.sum():.0%} of members)")

res = optimize(corpus.documents, exprs, cfg, gateway)
print(f"\noptimize: {len(res.scores)} round(s), stop={res.stop_reason}, final K={res.codebook.K}")
for i, s in enumerate(res.scores, 1):
    print(f"  round {i}: S={s.total:.4f}  distortion={s.distortion_term:.4f}  "
          f"doc entropy={s.per_doc_entropy_term:.4f}  global entropy={s.global_entropy_term:.4f}")
