"""Prompt templates dispatched to text-generation providers."""

from __future__ import annotations

import enum
import string
from dataclasses import dataclass


class TemplateId(str, enum.Enum):
    EXTRACT_VALUES = "extract_values"
    RECONSTRUCT_DOCUMENT = "reconstruct_document"
    NAME_CODE = "name_code"
    GENERATE_DOCUMENT = "generate_document"
    ROLE_PRIMED_GENERATE = "role_primed_generate"
    FILTER_TOPIC_MATCH = "filter_topic_match"


@dataclass(frozen=True)
class PromptTemplate:
    template_id: TemplateId
    body: str

    def placeholders(self) -> set[str]:
        return {name for _, name, _, _ in string.Formatter().parse(self.body) if name}

    def render(self, **fields) -> str:
        missing = self.placeholders() - fields.keys()
        if missing:
            raise ValueError(f"unfilled placeholders for {self.template_id.value}: {sorted(missing)}")
        return self.body.format(**{k: fields[k] for k in self.placeholders()})


EXTRACT_VALUES = PromptTemplate(TemplateId.EXTRACT_VALUES, """\
Read the text below and code the values its author holds.

Only code values: normative orientations the author endorses or treats as worth
pursuing, including ones expressed implicitly or through reflection. Do not code
beliefs about facts or momentary attitudes, and do not code positions the author
raises only to reject them.

Rules for every code:
- code_name is 1-3 words, abstract, and names a single concept
- description is one sentence stating the orientation the author endorses
- avoid vague labels such as "balance" or "growth" unless made into a clear principle
- a description must not compare two values against each other

Begin with one sentence summarising the author's overall stance. Then output the
codes as a Python list of dictionaries inside a ```python block:

```python
[
    {{"code_name": "<1-3 word value>", "description": "<one sentence>"}},
    ...
]
```

Text: "{document}"
Subject being coded: the author of the text
""")

RECONSTRUCT_DOCUMENT = PromptTemplate(TemplateId.RECONSTRUCT_DOCUMENT, """\
Write a piece in response to the topic below.

Constraints:
1. Let the listed values shape your tone, reasoning and point of view without naming them.
2. Never mention the value names or the numbers attached to them.
3. Each number is the relative weight of that value; heavier values should dominate the piece.

[Values]
{values}

[Topic]
{topic}
""")

NAME_CODE = PromptTemplate(TemplateId.NAME_CODE, """\
The descriptions below all express one value concept and come from different authors.
Give the group ONE value code name.

A value is something held to be worthwhile or admirable in itself; it is not a topic,
a strategy, a behaviour or a piece of advice.

Name rules:
- a noun or noun phrase of 1-3 words
- say how something is valued, not only what
- no generic labels such as Importance, Need or Utility

Reply with JSON only: {{"code_name": "<name>"}}

Descriptions, most central first:
{descriptions}
""")

GENERATE_DOCUMENT = PromptTemplate(TemplateId.GENERATE_DOCUMENT, "Write a piece of writing on {topic}")

ROLE_PRIMED_GENERATE = PromptTemplate(TemplateId.ROLE_PRIMED_GENERATE, """\
You are an AI without personal experiences; there is no need to say so.
Answer as {role_adjective} person would.

Write a piece of writing on {topic}""")

FILTER_TOPIC_MATCH = PromptTemplate(TemplateId.FILTER_TOPIC_MATCH, """\
Judge whether the document could plausibly have been written in response to the topic,
and whether it originates from within {culture}.

Answer with exactly two lines:
VERDICT: POSSIBLE or VERDICT: IMPOSSIBLE
REASON: <short reason>

TOPIC: {topic}

DOCUMENT: {document}
""")

TEMPLATES = {t.template_id: t for t in (
    EXTRACT_VALUES, RECONSTRUCT_DOCUMENT, NAME_CODE,
    GENERATE_DOCUMENT, ROLE_PRIMED_GENERATE, FILTER_TOPIC_MATCH,
)}

REPROMPT_SUFFIX = "\n\nYour previous reply could not be parsed. Reply only in the exact format requested above."

GROUP_ADJECTIVES = {
    "CN": "a Chinese",
    "JP": "a Japanese",
    "KR": "a Korean",
    "US": "an American",
}


def role_adjective(group: str) -> str:
    return GROUP_ADJECTIVES.get(group, f"a {group}")


def format_value_list(codes) -> str:
    return "\n".join(f"- {name} [{prob:.2f}]" for name, prob in codes)
