"""Prompt rendering for the single-agent variants and example selection."""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

from .corpus import Corpus, Sentence
from .errors import DataError
from .templates import DEFAULT_TEMPLATES, TemplateSet


class Variant(str, Enum):
    ZERO_SHOT = "ZERO_SHOT"
    FEW_SHOT = "FEW_SHOT"
    FEW_SHOT_ERROR = "FEW_SHOT_ERROR"
    COT = "COT"
    COT_FEW_SHOT_ERROR = "COT_FEW_SHOT_ERROR"
    MULTI_AGENT = "MULTI_AGENT"
    COT_MULTI_AGENT = "COT_MULTI_AGENT"
    COT_FEW_SHOT_ERROR_MULTI_AGENT = "COT_FEW_SHOT_ERROR_MULTI_AGENT"


#: Variants whose example pool is built from zero-shot mistakes.
ERROR_BASED_VARIANTS = frozenset({
    Variant.FEW_SHOT_ERROR,
    Variant.COT_FEW_SHOT_ERROR,
    Variant.COT_FEW_SHOT_ERROR_MULTI_AGENT,
})

MULTI_AGENT_VARIANTS = frozenset({
    Variant.MULTI_AGENT,
    Variant.COT_MULTI_AGENT,
    Variant.COT_FEW_SHOT_ERROR_MULTI_AGENT,
})


@dataclass(frozen=True)
class PromptBundle:
    variant: Variant
    system: str
    user: str
    expected_schema: str
    sentence_id: str

    def digest(self) -> str:
        payload = f"{self.system}\x00{self.user}".encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True)
class Example:
    sentence: Sentence
    gold_label: int
    reasoning: Mapping[str, str] | None = None  # {"step1": ..., "step2": ...}


def _label_name(label: int) -> str:
    return "ALWAYS DELIBERATIVE" if label else "NOT ALWAYS DELIBERATIVE"


def render_zero_shot(sentence: Sentence, templates: TemplateSet = DEFAULT_TEMPLATES) -> PromptBundle:
    return PromptBundle(
        variant=Variant.ZERO_SHOT,
        system=templates.render("zero_shot.system"),
        user=templates.render("zero_shot.user", sentence=sentence.text),
        expected_schema="SIMPLE",
        sentence_id=sentence.id,
    )


def render_few_shot(sentence: Sentence, examples: Sequence[Example],
                    templates: TemplateSet = DEFAULT_TEMPLATES) -> PromptBundle:
    if not examples:
        raise DataError("render_few_shot: no examples supplied")
    _check_examples(sentence, examples)
    lines = [
        templates.render("example_line", text=ex.sentence.text,
                         label_name=_label_name(ex.gold_label), label=ex.gold_label)
        for ex in examples
    ]
    return PromptBundle(
        variant=Variant.FEW_SHOT,
        system=templates.render("few_shot.system"),
        user=templates.render("few_shot.user", examples="\n".join(lines),
                              sentence=sentence.text),
        expected_schema="SIMPLE",
        sentence_id=sentence.id,
    )


def render_cot(sentence: Sentence, templates: TemplateSet = DEFAULT_TEMPLATES) -> PromptBundle:
    return PromptBundle(
        variant=Variant.COT,
        system=templates.render("cot.system"),
        user=templates.render("cot.user", sentence=sentence.text),
        expected_schema="COT",
        sentence_id=sentence.id,
    )


def render_cot_few_shot(sentence: Sentence, examples: Sequence[Example],
                        templates: TemplateSet = DEFAULT_TEMPLATES) -> PromptBundle:
    if not examples:
        raise DataError("render_cot_few_shot: no examples supplied")
    _check_examples(sentence, examples)
    blocks = []
    for ex in examples:
        if not ex.reasoning:
            raise DataError(f"example {ex.sentence.id} is missing generated reasoning")
        blocks.append(templates.render(
            "cot_example_block", text=ex.sentence.text,
            step1=ex.reasoning["step1"], step2=ex.reasoning["step2"],
            label_name=_label_name(ex.gold_label), label=ex.gold_label))
    return PromptBundle(
        variant=Variant.COT_FEW_SHOT_ERROR,
        system=templates.render("cot.system"),
        user=templates.render("cot_few_shot.user", examples="\n\n".join(blocks),
                              sentence=sentence.text),
        expected_schema="COT",
        sentence_id=sentence.id,
    )


def _check_examples(sentence: Sentence, examples: Sequence[Example]) -> None:
    for ex in examples:
        if ex.sentence.batch == sentence.batch:
            raise DataError(
                f"example {ex.sentence.id} comes from the target batch {sentence.batch}")


def eligible_pool(corpus: Corpus, target_batch: str) -> list[Example]:
    return [Example(sentence=s, gold_label=s.gold_label)
            for s in corpus.sentences if s.batch != target_batch]


def iter_shuffled_pool(pool: Sequence[Example], seed: int) -> Iterator[Example]:
    """Seeded uniform shuffle of the candidate pool, yielded lazily."""
    order = list(pool)
    random.Random(seed).shuffle(order)
    return iter(order)


def select_few_shot_examples(
    corpus: Corpus,
    target_batch: str,
    k: int,
    seed: int,
    pool: Sequence[Example] | None = None,
) -> list[Example]:
    """Sample k examples without replacement from batches other than the
    target, with a seeded generator for reproducibility.

    pool=None draws from the whole corpus; otherwise pool is a prebuilt
    candidate list (e.g. the error pool), filtered to non-target batches.
    """
    candidates = eligible_pool(corpus, target_batch) if pool is None else [
        ex for ex in pool if ex.sentence.batch != target_batch]
    if len(candidates) < k:
        raise DataError(
            f"insufficient example pool for batch {target_batch}: "
            f"need {k}, have {len(candidates)}")
    stream = iter_shuffled_pool(candidates, seed)
    return [next(stream) for _ in range(k)]


def build_error_pool(
    zero_shot_run: Mapping[str, int | None],
    corpus: Corpus,
    target_batch: str,
) -> list[Example]:
    """Sentences from non-target batches the zero-shot run got wrong.

    zero_shot_run maps sentence id to the predicted label (None marks a
    schema failure, which neither errors nor joins the pool). Every
    non-target batch must be covered by the run.
    """
    uncovered = sorted({
        s.batch for s in corpus.sentences
        if s.batch != target_batch and s.id not in zero_shot_run})
    if uncovered:
        raise DataError(
            "zero-shot run does not cover batches: " + ", ".join(uncovered))
    pool = []
    for s in corpus.sentences:
        if s.batch == target_batch:
            continue
        pred = zero_shot_run[s.id]
        if pred is not None and pred != s.gold_label:
            pool.append(Example(sentence=s, gold_label=s.gold_label))
    return pool


def render_reasoning_prompt(example: Example, templates: TemplateSet = DEFAULT_TEMPLATES,
                            attempt: int = 0) -> PromptBundle:
    user = templates.render("reasoning.user", sentence=example.sentence.text,
                            label_name=_label_name(example.gold_label),
                            label=example.gold_label)
    if attempt:
        # Changes the cache key so the retry is not served the cached
        # contradicting response.
        user += f"\n\n(retry {attempt})"
    return PromptBundle(
        variant=Variant.COT_FEW_SHOT_ERROR,
        system=templates.render("reasoning.system"),
        user=user,
        expected_schema="COT",
        sentence_id=example.sentence.id,
    )


def generate_example_reasoning(example: Example, backend,
                               templates: TemplateSet = DEFAULT_TEMPLATES,
                               repair_policy: str = "LENIENT") -> Example | None:
    """Elicit step1/step2 reasoning consistent with the example's gold label.

    Responses come through the backend's persistent cache, so repeat calls
    for the same (model, example) are free. A response whose concluding
    label contradicts gold is retried once; a second contradiction flags
    the example as excluded (returns None).
    """
    from .gateway import classify  # local import to avoid a cycle

    for attempt in (0, 1):
        bundle = render_reasoning_prompt(example, templates, attempt=attempt)
        outcome = classify(backend, bundle, repair_policy)
        pred = outcome.prediction
        if pred is not None and pred.label == example.gold_label:
            return replace(example, reasoning={"step1": pred.step1, "step2": pred.step2})
    return None


def reasoned_examples(
    corpus: Corpus,
    target_batch: str,
    k: int,
    seed: int,
    backend,
    pool: Sequence[Example] | None = None,
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> list[Example]:
    """First k pool candidates (seeded order) with valid generated reasoning.

    Candidates whose reasoning contradicts gold twice are skipped, keeping
    selection deterministic for a fixed (corpus, batch, k, seed, backend).
    """
    candidates = eligible_pool(corpus, target_batch) if pool is None else [
        ex for ex in pool if ex.sentence.batch != target_batch]
    if len(candidates) < k:
        raise DataError(
            f"insufficient example pool for batch {target_batch}: "
            f"need {k}, have {len(candidates)}")
    out: list[Example] = []
    for ex in iter_shuffled_pool(candidates, seed):
        reasoned = generate_example_reasoning(ex, backend, templates)
        if reasoned is not None:
            out.append(reasoned)
            if len(out) == k:
                return out
    raise DataError(
        f"insufficient example pool for batch {target_batch} after reasoning "
        f"exclusions: need {k}, have {len(out)}")
