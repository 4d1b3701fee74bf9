"""Experiment execution: one run = (variant, backend, corpus scope).

Storage is plain files under runs/<run_id>/: manifest.json plus
records.jsonl with one PredictionRecord per sentence. Interrupted runs
resume by skipping sentences that already have records; combined with the
response cache this makes a run a checkpointed pure map.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .agents import (OrchestrationFailure, run_majority_vote,
                     run_predictor_critic_judge)
from .corpus import Corpus
from .errors import DataError
from .gateway import ChatBackend, classify
from .prompting import (ERROR_BASED_VARIANTS, Example, Variant,
                        build_error_pool, reasoned_examples,
                        render_cot, render_cot_few_shot, render_few_shot,
                        render_zero_shot, select_few_shot_examples)
from .templates import DEFAULT_TEMPLATES, TemplateSet

log = logging.getLogger(__name__)

#: Dependency-sorted execution order for the full grid: the zero-shot run
#: must exist before any error-based variant can build its pools.
GRID_ORDER = (
    Variant.ZERO_SHOT,
    Variant.FEW_SHOT,
    Variant.FEW_SHOT_ERROR,
    Variant.COT,
    Variant.COT_FEW_SHOT_ERROR,
    Variant.MULTI_AGENT,
    Variant.COT_MULTI_AGENT,
    Variant.COT_FEW_SHOT_ERROR_MULTI_AGENT,
)


@dataclass
class RunManifest:
    run_id: str
    variant: str
    backend_digest: str
    backend_name: str
    corpus_digest: str
    template_version: str
    seed: int
    k: int
    batches: list[str]
    repair_policy: str
    started_at: str = ""
    finished_at: str = ""
    dispatched: int = 0
    cached: int = 0
    schema_failures: int = 0
    n_records: int = 0
    status: str = "running"

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(**d)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def compute_run_id(variant: Variant, backend_digest: str, corpus_digest: str,
                   seed: int, k: int, template_version: str,
                   repair_policy: str) -> str:
    payload = json.dumps([variant.value, backend_digest, corpus_digest, seed,
                          k, template_version, repair_policy])
    digest = hashlib.sha256(payload.encode()).hexdigest()[:10]
    return f"{variant.value.lower()}-{digest}"


def _record_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n"


def load_records(run_dir: str | Path) -> dict[str, dict]:
    path = Path(run_dir) / "records.jsonl"
    records: dict[str, dict] = {}
    if path.is_file():
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    records[rec["sentence_id"]] = rec
    return records


def load_manifest(run_dir: str | Path) -> RunManifest:
    path = Path(run_dir) / "manifest.json"
    if not path.is_file():
        raise DataError(f"no manifest in {run_dir}")
    return RunManifest.from_dict(json.loads(path.read_text(encoding="utf-8")))


def load_predictions(run_dir: str | Path) -> dict[str, int | None]:
    """sentence id -> final label, None for schema failures."""
    return {sid: rec["final_label"] for sid, rec in load_records(run_dir).items()}


def _seed_for_batch(seed: int, batch: str) -> int:
    digest = hashlib.sha256(f"{seed}:{batch}".encode()).hexdigest()
    return int(digest[:8], 16)


def _build_batch_examples(
    variant: Variant, corpus: Corpus, batch: str, k: int, seed: int,
    backend: ChatBackend, templates: TemplateSet,
    zero_shot_predictions: Mapping[str, int | None] | None,
) -> list[Example] | None:
    """Example set for one target batch, per the variant's pool rules."""
    batch_seed = _seed_for_batch(seed, batch)
    if variant == Variant.FEW_SHOT:
        return select_few_shot_examples(corpus, batch, k, batch_seed)
    if variant in ERROR_BASED_VARIANTS:
        assert zero_shot_predictions is not None
        pool = build_error_pool(zero_shot_predictions, corpus, batch)
        if variant == Variant.FEW_SHOT_ERROR:
            return select_few_shot_examples(corpus, batch, k, batch_seed, pool=pool)
        return reasoned_examples(corpus, batch, k, batch_seed, backend,
                                 pool=pool, templates=templates)
    return None


def run_variant(
    corpus: Corpus,
    variant: Variant,
    backend: ChatBackend,
    runs_dir: str | Path,
    batches: Sequence[str] | None = None,
    k: int = 5,
    seed: int = 0,
    repair_policy: str = "LENIENT",
    templates: TemplateSet = DEFAULT_TEMPLATES,
    zero_shot_run_dir: str | Path | None = None,
    stop_after: int | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> RunManifest:
    """Execute one variant over the corpus scope, resumably.

    Error-based variants require zero_shot_run_dir pointing at a completed
    zero-shot run for the same backend. stop_after limits the number of
    newly dispatched sentences (used to exercise interruption).
    """
    scope = [s for s in corpus.sentences
             if batches is None or s.batch in set(batches)]
    if not scope:
        raise DataError("run scope contains no sentences")
    scope_batches = sorted({s.batch for s in scope})

    zero_shot_predictions = None
    if variant in ERROR_BASED_VARIANTS:
        if zero_shot_run_dir is None:
            raise DataError(
                f"variant {variant.value} requires a completed zero-shot run "
                "(--zero-shot-run)")
        zero_shot_predictions = load_predictions(zero_shot_run_dir)
        if not zero_shot_predictions:
            raise DataError(f"zero-shot run at {zero_shot_run_dir} has no records")

    run_id = compute_run_id(variant, backend.config.digest(), corpus.digest(),
                            seed, k, templates.version, repair_policy)
    run_dir = Path(runs_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    existing = load_records(run_dir)

    manifest = RunManifest(
        run_id=run_id, variant=variant.value,
        backend_digest=backend.config.digest(),
        backend_name=backend.config.name,
        corpus_digest=corpus.digest(), template_version=templates.version,
        seed=seed, k=k, batches=scope_batches, repair_policy=repair_policy,
        started_at=_now(), n_records=len(existing),
        schema_failures=sum(1 for r in existing.values() if r["final_label"] is None),
    )
    manifest_path = run_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest.to_dict(), indent=2), encoding="utf-8")

    examples_by_batch: dict[str, list[Example] | None] = {}
    pending = [s for s in scope if s.id not in existing]
    total = len(pending)

    with (run_dir / "records.jsonl").open("a", encoding="utf-8") as records_fh:
        for done, sentence in enumerate(pending):
            if stop_after is not None and done >= stop_after:
                manifest.status = "interrupted"
                break
            if sentence.batch not in examples_by_batch:
                examples_by_batch[sentence.batch] = _build_batch_examples(
                    variant, corpus, sentence.batch, k, seed, backend,
                    templates, zero_shot_predictions)
            examples = examples_by_batch[sentence.batch]
            record = _dispatch(sentence, variant, backend, examples,
                               templates, repair_policy)
            record["run_id"] = run_id
            records_fh.write(_record_line(record))
            manifest.dispatched += 1
            manifest.cached += record.get("cached", 0)
            if record["final_label"] is None:
                manifest.schema_failures += 1
            manifest.n_records += 1
            if progress:
                progress(done + 1, total)
        else:
            manifest.status = "finished"
            manifest.finished_at = _now()

    manifest_path.write_text(json.dumps(manifest.to_dict(), indent=2), encoding="utf-8")
    return manifest


def _dispatch(sentence, variant: Variant, backend: ChatBackend,
              examples: Sequence[Example] | None,
              templates: TemplateSet, repair_policy: str) -> dict:
    record: dict = {"sentence_id": sentence.id, "variant": variant.value}

    if variant in (Variant.MULTI_AGENT, Variant.COT_MULTI_AGENT,
                   Variant.COT_FEW_SHOT_ERROR_MULTI_AGENT):
        try:
            if variant == Variant.MULTI_AGENT:
                trace = run_majority_vote(sentence, backend, templates, repair_policy)
            else:
                predictor = (Variant.COT_FEW_SHOT_ERROR
                             if variant == Variant.COT_FEW_SHOT_ERROR_MULTI_AGENT
                             else Variant.COT)
                trace = run_predictor_critic_judge(
                    sentence, backend, predictor, examples, templates, repair_policy)
        except OrchestrationFailure as failure:
            record.update(final_label=None,
                          failure=f"{failure.role}: {failure.reason}")
            return record
        record.update(final_label=trace.final_label, trace=trace.to_dict())
        return record

    if variant == Variant.ZERO_SHOT:
        bundle = render_zero_shot(sentence, templates)
    elif variant in (Variant.FEW_SHOT, Variant.FEW_SHOT_ERROR):
        bundle = render_few_shot(sentence, examples, templates)
    elif variant == Variant.COT:
        bundle = render_cot(sentence, templates)
    elif variant == Variant.COT_FEW_SHOT_ERROR:
        bundle = render_cot_few_shot(sentence, examples, templates)
    else:
        raise DataError(f"unknown variant: {variant}")

    outcome = classify(backend, bundle, repair_policy)
    completion = outcome.completion
    record["cached"] = int(completion.cached)
    record["latency_ms"] = completion.latency_ms
    record["raw_digest"] = hashlib.sha256(completion.text.encode()).hexdigest()[:16]
    if outcome.prediction is None:
        record.update(final_label=None, failure=outcome.failure)
        return record
    pred = outcome.prediction
    record["final_label"] = pred.label
    record["repairs"] = pred.repairs
    if pred.step1 is not None:
        record["step1"] = pred.step1
        record["step2"] = pred.step2
    return record


def run_grid(
    corpus: Corpus,
    backend: ChatBackend,
    runs_dir: str | Path,
    variants: Sequence[Variant] = GRID_ORDER,
    **kwargs,
) -> dict[Variant, RunManifest]:
    """Run several variants dependency-sorted (zero-shot first when any
    error-based variant is requested)."""
    requested = list(variants)
    ordered = [v for v in GRID_ORDER if v in requested]
    needs_zero_shot = any(v in ERROR_BASED_VARIANTS for v in ordered)
    if needs_zero_shot and Variant.ZERO_SHOT not in ordered:
        ordered.insert(0, Variant.ZERO_SHOT)
    manifests: dict[Variant, RunManifest] = {}
    zero_shot_dir = kwargs.pop("zero_shot_run_dir", None)
    for variant in ordered:
        extra = {}
        if variant in ERROR_BASED_VARIANTS:
            extra["zero_shot_run_dir"] = zero_shot_dir
        manifest = run_variant(corpus, variant, backend, runs_dir, **kwargs, **extra)
        manifests[variant] = manifest
        if variant == Variant.ZERO_SHOT:
            zero_shot_dir = Path(runs_dir) / manifest.run_id
    return manifests
