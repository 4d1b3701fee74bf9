"""Multi-agent orchestrations: majority vote, predictor-critic-judge, and
the disagreement-flip analysis over judge-decided traces."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import Corpus, Sentence
from .errors import DataError
from .gateway import ChatBackend, classify
from .parsing import ParsedPrediction
from .prompting import (Example, PromptBundle, Variant, render_cot,
                        render_cot_few_shot, render_zero_shot)
from .templates import DEFAULT_TEMPLATES, TemplateSet

log = logging.getLogger(__name__)

PREDICTOR = "PREDICTOR"
SECOND = "SECOND"
CRITIC = "CRITIC"
JUDGE = "JUDGE"

AGREEMENT = "AGREEMENT"
TIEBREAK = "TIEBREAK"
CRITIC_ACCEPTED = "CRITIC_ACCEPTED"
JUDGE_DECIDED = "JUDGE_DECIDED"


class OrchestrationFailure(Exception):
    """An agent step hit a schema failure; the sentence gets a failure record."""

    def __init__(self, sentence_id: str, role: str, reason: str):
        super().__init__(f"{role} schema failure on {sentence_id}: {reason}")
        self.sentence_id = sentence_id
        self.role = role
        self.reason = reason


@dataclass
class AgentStep:
    role: str
    prompt_digest: str
    output: dict
    raw_digest: str
    label: int

    def to_dict(self) -> dict:
        return {"role": self.role, "prompt_digest": self.prompt_digest,
                "output": self.output, "raw_digest": self.raw_digest,
                "label": self.label}

    @classmethod
    def from_dict(cls, d: dict) -> "AgentStep":
        return cls(role=d["role"], prompt_digest=d["prompt_digest"],
                   output=d["output"], raw_digest=d["raw_digest"], label=d["label"])


@dataclass
class AgentTrace:
    sentence_id: str
    steps: list[AgentStep]
    final_label: int
    resolution: str

    def to_dict(self) -> dict:
        return {"sentence_id": self.sentence_id,
                "steps": [s.to_dict() for s in self.steps],
                "final_label": self.final_label, "resolution": self.resolution}

    @classmethod
    def from_dict(cls, d: dict) -> "AgentTrace":
        return cls(sentence_id=d["sentence_id"],
                   steps=[AgentStep.from_dict(s) for s in d["steps"]],
                   final_label=d["final_label"], resolution=d["resolution"])


@dataclass
class DisagreementReport:
    n_disagreements: int = 0
    judge_followed_critic: int = 0
    # (from_label, to_label, gold) -> count, over judge-followed-critic flips
    flips: dict = field(default_factory=dict)

    @property
    def corrected_to_nondeliberative(self) -> int:
        return sum(n for (f, t, _g), n in self.flips.items() if f == 1 and t == 0)

    @property
    def corrected_to_deliberative(self) -> int:
        return sum(n for (f, t, _g), n in self.flips.items() if f == 0 and t == 1)

    @property
    def true_positives_flagged_false(self) -> int:
        return self.flips.get((1, 0, 1), 0)

    @property
    def false_positives_caught(self) -> int:
        return self.flips.get((1, 0, 0), 0)

    @property
    def wrongly_promoted(self) -> int:
        return self.flips.get((0, 1, 0), 0)

    @property
    def correctly_promoted(self) -> int:
        return self.flips.get((0, 1, 1), 0)

    def to_dict(self) -> dict:
        return {
            "n_disagreements": self.n_disagreements,
            "judge_followed_critic": self.judge_followed_critic,
            "flips": {f"{f}->{t} gold={g}": n for (f, t, g), n in sorted(self.flips.items())},
            "corrected_to_nondeliberative": self.corrected_to_nondeliberative,
            "corrected_to_deliberative": self.corrected_to_deliberative,
            "true_positives_flagged_false": self.true_positives_flagged_false,
            "false_positives_caught": self.false_positives_caught,
        }


def _step(role: str, bundle: PromptBundle, backend: ChatBackend,
          repair_policy: str) -> tuple[AgentStep, ParsedPrediction]:
    outcome = classify(backend, bundle, repair_policy)
    if outcome.prediction is None:
        raise OrchestrationFailure(bundle.sentence_id, role, outcome.failure or "unparseable")
    pred = outcome.prediction
    output = {"label": pred.label}
    if pred.step1 is not None:
        output["step1"] = pred.step1
        output["step2"] = pred.step2
    output.update(pred.extra)
    raw_digest = hashlib.sha256(pred.raw.encode()).hexdigest()[:16]
    return AgentStep(role=role, prompt_digest=bundle.digest(), output=output,
                     raw_digest=raw_digest, label=pred.label), pred


def run_majority_vote(sentence: Sentence, backend: ChatBackend,
                      templates: TemplateSet = DEFAULT_TEMPLATES,
                      repair_policy: str = "LENIENT") -> AgentTrace:
    """Two zero-shot-style votes; a third agent breaks ties."""
    step1, pred1 = _step(PREDICTOR, render_zero_shot(sentence, templates),
                         backend, repair_policy)
    second_bundle = PromptBundle(
        variant=Variant.MULTI_AGENT,
        system=templates.render("vote_second.system"),
        user=templates.render("vote_second.user", sentence=sentence.text,
                              first_label=pred1.label),
        expected_schema="SIMPLE", sentence_id=sentence.id)
    step2, pred2 = _step(SECOND, second_bundle, backend, repair_policy)
    if pred1.label == pred2.label:
        return AgentTrace(sentence_id=sentence.id, steps=[step1, step2],
                          final_label=pred1.label, resolution=AGREEMENT)
    tiebreak_bundle = PromptBundle(
        variant=Variant.MULTI_AGENT,
        system=templates.render("vote_tiebreak.system"),
        user=templates.render("vote_tiebreak.user", sentence=sentence.text,
                              first_label=pred1.label, second_label=pred2.label),
        expected_schema="SIMPLE", sentence_id=sentence.id)
    step3, pred3 = _step(JUDGE, tiebreak_bundle, backend, repair_policy)
    return AgentTrace(sentence_id=sentence.id, steps=[step1, step2, step3],
                      final_label=pred3.label, resolution=TIEBREAK)


def run_predictor_critic_judge(
    sentence: Sentence,
    backend: ChatBackend,
    predictor_variant: Variant = Variant.COT,
    examples: Sequence[Example] | None = None,
    templates: TemplateSet = DEFAULT_TEMPLATES,
    repair_policy: str = "LENIENT",
) -> AgentTrace:
    """CoT predictor, critic review, judge only on disagreement."""
    if predictor_variant == Variant.COT_FEW_SHOT_ERROR:
        if not examples:
            raise DataError("predictor variant requires reasoned examples")
        predictor_bundle = render_cot_few_shot(sentence, examples, templates)
    elif predictor_variant == Variant.COT:
        predictor_bundle = render_cot(sentence, templates)
    else:
        raise DataError(f"unsupported predictor variant: {predictor_variant}")

    step_p, pred = _step(PREDICTOR, predictor_bundle, backend, repair_policy)

    critic_bundle = PromptBundle(
        variant=Variant.COT_MULTI_AGENT,
        system=templates.render("critic.system"),
        user=templates.render("critic.user", sentence=sentence.text,
                              step1=pred.step1, step2=pred.step2,
                              predictor_label=pred.label),
        expected_schema="CRITIC", sentence_id=sentence.id)
    step_c, critic = _step(CRITIC, critic_bundle, backend, repair_policy)

    assessment = critic.extra.get("assessment")
    if assessment == "sound" and critic.label != pred.label:
        # A sound assessment endorses the prediction; the contradicting
        # combination is a schema violation under STRICT and is normalized
        # to flawed under LENIENT.
        if repair_policy == "STRICT":
            raise OrchestrationFailure(sentence.id, CRITIC,
                                       "sound assessment with contradicting suggestion")
        log.warning("critic on %s: sound assessment with contradicting "
                    "suggestion, normalized to flawed", sentence.id)
        step_c.output["assessment"] = assessment = "flawed"

    if critic.label == pred.label:
        return AgentTrace(sentence_id=sentence.id, steps=[step_p, step_c],
                          final_label=pred.label, resolution=CRITIC_ACCEPTED)

    judge_bundle = PromptBundle(
        variant=Variant.COT_MULTI_AGENT,
        system=templates.render("judge.system"),
        user=templates.render("judge.user", sentence=sentence.text,
                              step1=pred.step1, step2=pred.step2,
                              predictor_label=pred.label,
                              assessment=assessment,
                              issues=critic.extra.get("issues", ""),
                              critic_label=critic.label),
        expected_schema="JUDGE", sentence_id=sentence.id)
    step_j, judge = _step(JUDGE, judge_bundle, backend, repair_policy)
    return AgentTrace(sentence_id=sentence.id, steps=[step_p, step_c, step_j],
                      final_label=judge.label, resolution=JUDGE_DECIDED)


def analyze_disagreements(traces: Sequence[AgentTrace], corpus: Corpus) -> DisagreementReport:
    """Over judge-decided traces: how often the judge followed the critic,
    with each resulting label flip classified by direction and gold."""
    gold = {s.id: s.gold_label for s in corpus.sentences}
    report = DisagreementReport()
    for trace in traces:
        if trace.resolution != JUDGE_DECIDED:
            continue
        if trace.sentence_id not in gold:
            raise DataError(f"trace for unknown sentence id: {trace.sentence_id}")
        report.n_disagreements += 1
        predictor_label = trace.steps[0].label
        critic_label = trace.steps[1].label
        if trace.final_label == critic_label:
            report.judge_followed_critic += 1
            key = (predictor_label, trace.final_label, gold[trace.sentence_id])
            report.flips[key] = report.flips.get(key, 0) + 1
    return report
