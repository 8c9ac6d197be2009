"""Multimodal question/answer dataset construction.

Renders the prompt-template corpus against tokenized trials and their ground
truth, under a participant-level train/test split, and shuffles the result so
tasks interleave. Also owns the chat-format serialization used for fine-tune
exports and the task registry (vocabularies, answer formats) shared with the
baselines, evaluator, and chat service.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ContractViolation, EmptyInputError
from .splits import split_participants
from .synth import Activity, AssistiveDevice, Diagnosis, TrialGroundTruth
from .tokenizer import TokenSequence

MOTION_PLACEHOLDER = "{motion_placeholder}"
MOTION_START = "<motion_start>"
MOTION_END = "<motion_end>"
TURN_USER = "<start_of_turn>user"
TURN_MODEL = "<start_of_turn>model"
END_OF_TURN = "<end_of_turn>"


class TaskKind(str, Enum):
    ACTIVITY = "Activity"
    IMPAIRED = "Impaired"
    DIAGNOSIS = "Diagnosis"
    ASSISTIVE_DEVICE = "AssistiveDevice"
    FALLS = "Falls"
    CADENCE = "Cadence"
    WALKING_SPEED = "WalkingSpeed"
    TUG_TIME = "TugTime"
    FSST_TIME = "FsstTime"


CLASSIFICATION_TASKS = (TaskKind.ACTIVITY, TaskKind.IMPAIRED, TaskKind.DIAGNOSIS,
                        TaskKind.ASSISTIVE_DEVICE, TaskKind.FALLS)
REGRESSION_TASKS = (TaskKind.CADENCE, TaskKind.WALKING_SPEED, TaskKind.TUG_TIME,
                    TaskKind.FSST_TIME)

ACTIVITY_DISPLAY = {
    Activity.OVERGROUND_WALK: "Overground walking",
    Activity.TIMED_UP_AND_GO: "Timed up and go",
    Activity.FOUR_SQUARE_STEP_TEST: "Four square step test",
    Activity.L_TEST: "L-test",
    Activity.FUNCTIONAL_GAIT_ASSESSMENT: "Functional gait assessment",
    Activity.SIT_TO_STAND: "Sit to stand",
    Activity.QUIET_STANDING: "Quiet standing",
    Activity.TURNING_IN_PLACE: "Turning in place",
}

DIAGNOSIS_DISPLAY = {
    Diagnosis.PROSTHESIS_USER: "Lower limb prosthesis user",
    Diagnosis.STROKE: "Stroke",
    Diagnosis.SCI: "Spinal cord injury",
    Diagnosis.TBI: "Traumatic brain injury",
}

DEVICE_DISPLAY = {
    AssistiveDevice.NONE: "None",
    AssistiveDevice.CANE: "Cane",
    AssistiveDevice.WALKER: "Walker",
    AssistiveDevice.ROLLATOR: "Rollator",
    AssistiveDevice.CRUTCHES: "Crutches",
}


@dataclass(frozen=True)
class TaskSpec:
    """How one task maps ground truth to answer text and back."""

    kind: TaskKind
    is_regression: bool
    vocabulary: tuple[str, ...] | None = None
    positive_label: str | None = None  # binary tasks score the positive class
    unit: str | None = None
    value_format: str | None = None

    def truth_value(self, gt: TrialGroundTruth):
        if self.kind == TaskKind.ACTIVITY:
            return ACTIVITY_DISPLAY[gt.activity]
        if self.kind == TaskKind.IMPAIRED:
            return "Yes" if gt.impaired else "No"
        if self.kind == TaskKind.DIAGNOSIS:
            if gt.diagnosis == Diagnosis.NONE:
                raise ContractViolation("diagnosis task rendered for an unimpaired trial")
            return DIAGNOSIS_DISPLAY[gt.diagnosis]
        if self.kind == TaskKind.ASSISTIVE_DEVICE:
            return DEVICE_DISPLAY[gt.assistive_device]
        if self.kind == TaskKind.FALLS:
            if gt.fall_history is None:
                raise ContractViolation("falls task rendered without fall data")
            return "Yes" if gt.fall_history else "No"
        value = {
            TaskKind.CADENCE: gt.cadence_steps_per_min,
            TaskKind.WALKING_SPEED: gt.speed_m_s,
            TaskKind.TUG_TIME: gt.completion_time_s,
            TaskKind.FSST_TIME: gt.completion_time_s,
        }[self.kind]
        if value is None:
            raise ContractViolation(f"{self.kind.value} task rendered without its measurement")
        return float(value)

    def format_value(self, value) -> str:
        """Render a truth value or model prediction as canonical answer text."""
        if self.is_regression:
            return f"{{v:{self.value_format}}} {self.unit}".format(v=float(value))
        return str(value)


TASK_SPECS: dict[TaskKind, TaskSpec] = {
    TaskKind.ACTIVITY: TaskSpec(TaskKind.ACTIVITY, False,
                                vocabulary=tuple(ACTIVITY_DISPLAY[a] for a in Activity)),
    TaskKind.IMPAIRED: TaskSpec(TaskKind.IMPAIRED, False, vocabulary=("No", "Yes"),
                                positive_label="Yes"),
    TaskKind.DIAGNOSIS: TaskSpec(TaskKind.DIAGNOSIS, False,
                                 vocabulary=tuple(DIAGNOSIS_DISPLAY[d] for d in Diagnosis
                                                  if d != Diagnosis.NONE)),
    TaskKind.ASSISTIVE_DEVICE: TaskSpec(TaskKind.ASSISTIVE_DEVICE, False,
                                        vocabulary=tuple(DEVICE_DISPLAY[d] for d in AssistiveDevice)),
    TaskKind.FALLS: TaskSpec(TaskKind.FALLS, False, vocabulary=("No", "Yes"),
                             positive_label="Yes"),
    TaskKind.CADENCE: TaskSpec(TaskKind.CADENCE, True, unit="steps/min", value_format=".0f"),
    TaskKind.WALKING_SPEED: TaskSpec(TaskKind.WALKING_SPEED, True, unit="m/s", value_format=".2f"),
    TaskKind.TUG_TIME: TaskSpec(TaskKind.TUG_TIME, True, unit="s", value_format=".1f"),
    TaskKind.FSST_TIME: TaskSpec(TaskKind.FSST_TIME, True, unit="s", value_format=".1f"),
}


@dataclass(frozen=True)
class PromptTemplate:
    task_kind: TaskKind
    prompt_pattern: str
    answer_pattern: str

    def __post_init__(self):
        if self.prompt_pattern.count(MOTION_PLACEHOLDER) != 1:
            raise ContractViolation("prompt pattern must contain the motion placeholder exactly once")


# ---------------------------------------------------------------------------
# Template corpus. The wording of each prompt is fixed vocabulary for the
# pipeline (the chat intent matcher scores against it), so entries are kept
# exactly as curated, including the duplicated activity prompt.

_ACTIVITY_TEMPLATES = [
    ("{motion_placeholder} Identify the activity shown here", "{activity}"),
    ("{motion_placeholder} What is this person doing?", "{activity}"),
    ("{motion_placeholder} What specific action is being performed?", "{activity}"),
    ("{motion_placeholder} Can you tell what activity is happening in this motion sequence?", "{activity}"),
    ("{motion_placeholder} The primary action demonstrated by is what", "{activity}"),
    ("{motion_placeholder} Describe the activity captured in the motion", "{activity}"),
    ("{motion_placeholder} represents which activity", "{activity}"),
    ("{motion_placeholder} What task is the subject performing in the sequence", "{activity}"),
    ("{motion_placeholder} Based on, what is the person doing", "{activity}"),
    ("{motion_placeholder} Determine the activity classification for", "{activity}"),
    ("{motion_placeholder} This motion sequence, illustrates what activity", "{activity}"),
    ("{motion_placeholder} How would you label the activity present in", "{activity}"),
    ("{motion_placeholder} What is the activity", "{activity}"),
    ("{motion_placeholder} What activity is being performed in this motion sequence", "{activity}"),
    ("{motion_placeholder} What activity is being performed in this motion sequence", "{activity}"),
    ("{motion_placeholder} This motion sequence shows what activity", "{activity}"),
    ("{motion_placeholder} What is being performed here", "{activity}"),
]

_IMPAIRED_TEMPLATES = [
    ("{motion_placeholder} Does this person have a gait impairment?", "{movement_impairment}"),
    ("{motion_placeholder} Does this person have a movement impairment?", "{movement_impairment}"),
    ("{motion_placeholder} Looking at, is a movement impairment likely", "{movement_impairment}"),
    ("{motion_placeholder} Does this suggest a potential movement impairment", "{movement_impairment}"),
    ("{motion_placeholder} Is it probable that someone moving like in has a movement impairment", "{movement_impairment}"),
    ("{motion_placeholder} Would you classify the motion as indicative of impairment", "{movement_impairment}"),
    ("{motion_placeholder} Assess the likelihood of movement impairment based on", "{movement_impairment}"),
    ("{motion_placeholder} Could this movement pattern signify an impairment", "{movement_impairment}"),
    ("{motion_placeholder} Does the way the person moves in point towards a movement impairment", "{movement_impairment}"),
    ("{motion_placeholder} Observing, is there evidence suggesting a movement impairment", "{movement_impairment}"),
    ("{motion_placeholder} Could be associated with a movement impairment", "{movement_impairment}"),
    ("{motion_placeholder} How likely is it that the motion sequence displays characteristics of impairment", "{movement_impairment}"),
    ("{motion_placeholder} Evaluate for signs of movement impairment", "{movement_impairment}"),
    ("{motion_placeholder} Based on the movement, is impairment a possibility", "{movement_impairment}"),
    ("{motion_placeholder} Does someone who moves like this likely have a movement impairment", "{movement_impairment}"),
]

_DIAGNOSIS_TEMPLATES = [
    ("{motion_placeholder} What is a likely etiology for their gait impairment?", "{diagnosis}"),
    ("{motion_placeholder} What is the most likely diagnosis for their gait impairment?", "{diagnosis}"),
    ("{motion_placeholder} could be indicative of what diagnosis", "{diagnosis}"),
    ("{motion_placeholder} What medical diagnosis might explain the motion seen in", "{diagnosis}"),
    ("{motion_placeholder} Identify a potential diagnosis associated with the movement pattern", "{diagnosis}"),
    ("{motion_placeholder} Which diagnosis is commonly linked to this type of motion", "{diagnosis}"),
    ("{motion_placeholder} A person exhibiting movements like might have what diagnosis", "{diagnosis}"),
    ("{motion_placeholder} Suggest a possible diagnosis based on the motion sequence", "{diagnosis}"),
    ("{motion_placeholder} What underlying condition could cause this motion", "{diagnosis}"),
    ("{motion_placeholder} What diagnosis should be considered for someone moving as shown in", "{diagnosis}"),
    ("{motion_placeholder} Could the motion be a symptom of a specific diagnosis", "{diagnosis}"),
    ("{motion_placeholder} Link the motion pattern in to a likely diagnosis", "{diagnosis}"),
    ("{motion_placeholder} Propose a relevant diagnosis", "{diagnosis}"),
    ("{motion_placeholder} If a patient moves like, what diagnosis comes to mind", "{diagnosis}"),
    ("{motion_placeholder} What diagnosis is likely associated with this motion", "{diagnosis}"),
    ("{motion_placeholder} Someone that moves like this may have what diagnosis", "{diagnosis}"),
]

_ASSISTIVE_DEVICE_TEMPLATES = [
    ("{motion_placeholder} What assistive device this person using?", "{assistive_device}"),
    ("{motion_placeholder} What assistive device is used in this movement", "{assistive_device}"),
    ("{motion_placeholder} Identify the assistive device present in the motion sequence", "{assistive_device}"),
    ("{motion_placeholder} Which mobility aid, if any, is being utilized", "{assistive_device}"),
    ("{motion_placeholder} Specify the assistive device employed by the person in", "{assistive_device}"),
    ("{motion_placeholder} Can you determine the type of assistive device shown in", "{assistive_device}"),
    ("{motion_placeholder} Name the support device used during the movement", "{assistive_device}"),
    ("{motion_placeholder} What equipment is assisting the movement", "{assistive_device}"),
    ("{motion_placeholder} Is an assistive device being used? If yes, what is it", "{assistive_device}"),
    ("{motion_placeholder} Characterize the assistive device seen in", "{assistive_device}"),
    ("{motion_placeholder} Assistive device used", "{assistive_device}"),
]

_MOVEMENT_DESCRIPTION_TEMPLATES = [
    ("{motion_placeholder} How would you describe the movement in this motion sequence", "{verbal_description}"),
    ("{motion_placeholder} Describe the movement pattern shown in", "{verbal_description}"),
    ("{motion_placeholder} Provide a qualitative description of the motion", "{verbal_description}"),
    ("{motion_placeholder} Characterize the manner of movement observed in", "{verbal_description}"),
    ("{motion_placeholder} Can you give a verbal summary of the movement style in", "{verbal_description}"),
    ("{motion_placeholder} Explain the characteristics of the motion depicted in", "{verbal_description}"),
    ("{motion_placeholder} Summarize the key features of this movement", "{verbal_description}"),
    ("{motion_placeholder} Offer a textual description for the motion sequence", "{verbal_description}"),
    ("{motion_placeholder} What are the notable aspects of the movement shown in", "{verbal_description}"),
    ("{motion_placeholder} Based on, describe how the person is moving", "{verbal_description}"),
    ("{motion_placeholder} Detail the nature of the motion", "{verbal_description}"),
    ("{motion_placeholder} Provide descriptive text for the movement in", "{verbal_description}"),
    ("{motion_placeholder} Summarize the visual qualities of the motion in", "{verbal_description}"),
    ("{motion_placeholder} Elaborate on the movement style presented", "{verbal_description}"),
    ("{motion_placeholder} Give an overall description of the movement pattern in", "{verbal_description}"),
]

_DESCRIPTION_TEMPLATES = [
    ("{motion_placeholder} Provide a plausible clinical one-liner for someone that moves like this", "{description}"),
    ("{motion_placeholder} Suggest a likely clinical one-liner based on this movement pattern", "{description}"),
    ("{motion_placeholder} What is a concise clinical impression suggested by this motion?", "{description}"),
    ("{motion_placeholder} Briefly describe a potential clinical context for this movement", "{description}"),
    ("{motion_placeholder} Infer a short clinical summary relevant to this motion pattern", "{description}"),
    ("{motion_placeholder} Generate a relevant clinical one-liner describing this movement", "{description}"),
    ("{motion_placeholder} Based on this motion, offer a brief clinical description highlighting key factors", "{description}"),
    ("{motion_placeholder} What short clinical summary fits this movement observation?", "{description}"),
    ("{motion_placeholder} Condense the most pertinent clinical information impacting this movement into one sentence", "{description}"),
    ("{motion_placeholder} Formulate a brief clinical note summarizing the context for this motion", "{description}"),
]

_CADENCE_TEMPLATES = [
    ("{motion_placeholder} What is the cadence of this walking in steps/min?", "{overall_Cadence:.0f} steps/min"),
    ("{motion_placeholder} Calculate the steps per minute for the walking pattern.", "{overall_Cadence:.0f} steps/min"),
    ("{motion_placeholder} Determine the walking cadence (steps/minute).", "{overall_Cadence:.0f} steps/min"),
    ("{motion_placeholder} Provide the walking cadence in steps/min for the motion sequence.", "{overall_Cadence:.0f} steps/min"),
    ("{motion_placeholder} For the gait shown, what is the cadence in steps per minute?", "{overall_Cadence:.0f} steps/min"),
    ("{motion_placeholder} How many steps per minute are observed in this motion?", "{overall_Cadence:.0f} steps/min"),
    ("{motion_placeholder} At what cadence is this person walking?", "{overall_Cadence:.0f} steps/min"),
    ("{motion_placeholder} What is their cadence?", "{overall_Cadence:.0f} steps/min"),
]

_WALKING_SPEED_TEMPLATES = [
    ("{motion_placeholder} What is the speed of this walking in m/s?", "{stride_m_s:.2f} m/s"),
    ("{motion_placeholder} Calculate the walking velocity in m/s for the motion sequence.", "{stride_m_s:.2f} m/s"),
    ("{motion_placeholder} Determine the speed of ambulation in meters per second.", "{stride_m_s:.2f} m/s"),
    ("{motion_placeholder} Express the walking speed shown in in m/s.", "{stride_m_s:.2f} m/s"),
    ("{motion_placeholder} How fast is this person walking?", "{stride_m_s:.2f} m/s"),
    ("{motion_placeholder} What is the walking speed?", "{stride_m_s:.2f} m/s"),
]

# The timed-test and fall-history tasks carry no curated prompt list; these
# are in-house wordings following the same shape.
_FALLS_TEMPLATES = [
    ("{motion_placeholder} Does this person have a history of falls?", "{fall_history}"),
    ("{motion_placeholder} Has this lower limb prosthesis user experienced falls?", "{fall_history}"),
    ("{motion_placeholder} Based on this gait, is there a reported fall history?", "{fall_history}"),
    ("{motion_placeholder} Is a history of falling likely for this person?", "{fall_history}"),
    ("{motion_placeholder} Does the movement suggest the person has fallen before?", "{fall_history}"),
    ("{motion_placeholder} Fall history present?", "{fall_history}"),
]

_TUG_TEMPLATES = [
    ("{motion_placeholder} How long did this timed up and go take in seconds?", "{tug_time_s:.1f} s"),
    ("{motion_placeholder} What is the completion time for this timed up and go?", "{tug_time_s:.1f} s"),
    ("{motion_placeholder} Report the timed up and go duration in seconds.", "{tug_time_s:.1f} s"),
    ("{motion_placeholder} Time to complete the timed up and go?", "{tug_time_s:.1f} s"),
]

_FSST_TEMPLATES = [
    ("{motion_placeholder} How long did this four square step test take in seconds?", "{fsst_time_s:.1f} s"),
    ("{motion_placeholder} What is the completion time for this four square step test?", "{fsst_time_s:.1f} s"),
    ("{motion_placeholder} Report the four square step test duration in seconds.", "{fsst_time_s:.1f} s"),
    ("{motion_placeholder} Time to complete the four square step test?", "{fsst_time_s:.1f} s"),
]


@dataclass(frozen=True)
class TemplateRegistry:
    active: dict[TaskKind, tuple[PromptTemplate, ...]]
    # Description-style corpora have no ground truth here; they are carried
    # along but never rendered.
    inactive: dict[str, tuple[tuple[str, str], ...]]


def load_templates() -> TemplateRegistry:
    raw = {
        TaskKind.ACTIVITY: _ACTIVITY_TEMPLATES,
        TaskKind.IMPAIRED: _IMPAIRED_TEMPLATES,
        TaskKind.DIAGNOSIS: _DIAGNOSIS_TEMPLATES,
        TaskKind.ASSISTIVE_DEVICE: _ASSISTIVE_DEVICE_TEMPLATES,
        TaskKind.FALLS: _FALLS_TEMPLATES,
        TaskKind.CADENCE: _CADENCE_TEMPLATES,
        TaskKind.WALKING_SPEED: _WALKING_SPEED_TEMPLATES,
        TaskKind.TUG_TIME: _TUG_TEMPLATES,
        TaskKind.FSST_TIME: _FSST_TEMPLATES,
    }
    active = {
        kind: tuple(PromptTemplate(kind, prompt, answer) for prompt, answer in pairs)
        for kind, pairs in raw.items()
    }
    inactive = {
        "MovementDescription": tuple(_MOVEMENT_DESCRIPTION_TEMPLATES),
        "Description": tuple(_DESCRIPTION_TEMPLATES),
    }
    return TemplateRegistry(active=active, inactive=inactive)


def applicable_tasks(gt: TrialGroundTruth) -> set[TaskKind]:
    """Which QA tasks can honestly be asked about a trial."""
    tasks = {TaskKind.ACTIVITY, TaskKind.IMPAIRED, TaskKind.ASSISTIVE_DEVICE}
    if gt.impaired:
        tasks.add(TaskKind.DIAGNOSIS)
    if gt.fall_history is not None:
        tasks.add(TaskKind.FALLS)
    if gt.on_walkway:
        tasks.add(TaskKind.CADENCE)
        tasks.add(TaskKind.WALKING_SPEED)
    if gt.completion_time_s is not None:
        if gt.activity == Activity.TIMED_UP_AND_GO:
            tasks.add(TaskKind.TUG_TIME)
        elif gt.activity == Activity.FOUR_SQUARE_STEP_TEST:
            tasks.add(TaskKind.FSST_TIME)
    return tasks


# ---------------------------------------------------------------------------
# Rendering


def serialize_motion_span(tokens: TokenSequence) -> str:
    """`<motion_start><motion_k>...<motion_end>` with 0-based codebook indices."""
    if not tokens.tokens:
        raise EmptyInputError("cannot serialize an empty token sequence")
    body = "".join(f"<motion_{k}>" for k in tokens.tokens)
    return f"{MOTION_START}{body}{MOTION_END}"


_SPAN_RE = re.compile(re.escape(MOTION_START) + r"((?:<motion_\d+>)*)" + re.escape(MOTION_END))
_TOKEN_RE = re.compile(r"<motion_(\d+)>")


def parse_motion_span(text: str) -> list[int]:
    """Recover the token indices from a serialized motion span."""
    m = _SPAN_RE.search(text)
    if m is None:
        raise ContractViolation("no motion span found")
    return [int(k) for k in _TOKEN_RE.findall(m.group(1))]


@dataclass(frozen=True)
class MultimodalSample:
    task_kind: TaskKind
    participant_id: str
    trial_id: str
    prompt_text: str
    answer_text: str
    split: str  # "train" | "test"
    template_index: int

    def __post_init__(self):
        if not self.answer_text:
            raise ContractViolation("answer_text must be non-empty")
        if self.split not in ("train", "test"):
            raise ContractViolation(f"split must be train|test, got {self.split!r}")


_HOLE_NAMES = {
    TaskKind.ACTIVITY: "activity",
    TaskKind.IMPAIRED: "movement_impairment",
    TaskKind.DIAGNOSIS: "diagnosis",
    TaskKind.ASSISTIVE_DEVICE: "assistive_device",
    TaskKind.FALLS: "fall_history",
    TaskKind.CADENCE: "overall_Cadence",
    TaskKind.WALKING_SPEED: "stride_m_s",
    TaskKind.TUG_TIME: "tug_time_s",
    TaskKind.FSST_TIME: "fsst_time_s",
}


def _answer_values(kind: TaskKind, gt: TrialGroundTruth) -> dict:
    return {_HOLE_NAMES[kind]: TASK_SPECS[kind].truth_value(gt)}


def render_sample(template: PromptTemplate, tokens: TokenSequence, gt: TrialGroundTruth,
                  split: str, template_index: int, participant_id: str) -> MultimodalSample:
    """Fill one template: motion span inlined, answer holes from ground truth.

    Numeric format specs in the answer pattern round half-to-even.
    """
    if template.task_kind not in applicable_tasks(gt):
        raise ContractViolation(f"template {template.task_kind.value} not applicable to this trial")
    prompt = template.prompt_pattern.replace(MOTION_PLACEHOLDER, serialize_motion_span(tokens))
    answer = template.answer_pattern.format(**_answer_values(template.task_kind, gt))
    return MultimodalSample(
        task_kind=template.task_kind,
        participant_id=participant_id,
        trial_id=tokens.trial_id,
        prompt_text=prompt,
        answer_text=answer,
        split=split,
        template_index=template_index,
    )


def format_chat(sample: MultimodalSample) -> str:
    """Chat-template rendering of one sample, byte-stable."""
    return (f"{TURN_USER}\n{sample.prompt_text}\n"
            f"{TURN_MODEL}\n{sample.answer_text}{END_OF_TURN}")


def format_chat_prompt(prompt_text: str) -> str:
    """Chat rendering of a pending query (no model answer yet)."""
    return f"{TURN_USER}\n{prompt_text}\n{TURN_MODEL}\n"


# ---------------------------------------------------------------------------
# Dataset assembly


@dataclass(frozen=True)
class TrialRecord:
    participant_id: str
    trial_id: str
    tokens: TokenSequence
    ground_truth: TrialGroundTruth


@dataclass
class DatasetManifest:
    seed: int
    tokenizer_fingerprint: str
    split_ratio: float
    task_counts: dict[str, dict[str, int]]
    samples: list[MultimodalSample]

    def recount(self) -> dict[str, dict[str, int]]:
        counts: dict[str, dict[str, int]] = {}
        participants: dict[str, dict[str, set]] = {}
        for s in self.samples:
            kind = s.task_kind.value
            c = counts.setdefault(kind, {"train_samples": 0, "test_samples": 0,
                                         "train_participants": 0, "test_participants": 0})
            p = participants.setdefault(kind, {"train": set(), "test": set()})
            c[f"{s.split}_samples"] += 1
            p[s.split].add(s.participant_id)
        for kind, p in participants.items():
            counts[kind]["train_participants"] = len(p["train"])
            counts[kind]["test_participants"] = len(p["test"])
        return counts


def build_dataset(records: list[TrialRecord], seed: int,
                  task_filter: set[TaskKind] | None = None,
                  split_ratio: float = 0.9,
                  tokenizer_fingerprint: str = "") -> DatasetManifest:
    """Render every applicable (trial, task) pair once and shuffle globally.

    Templates are drawn uniformly at random under the seed; the participant
    split is deterministic under the same seed, so different seeds change the
    wording but never the (trial, task) coverage.
    """
    if not records:
        raise EmptyInputError("no trial records")
    ids = sorted({r.participant_id for r in records})
    train_ids, _ = split_participants(ids, split_ratio, seed)
    registry = load_templates()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xDA]))

    samples: list[MultimodalSample] = []
    for rec in sorted(records, key=lambda r: (r.participant_id, r.trial_id)):
        split = "train" if rec.participant_id in train_ids else "test"
        for kind in sorted(applicable_tasks(rec.ground_truth), key=lambda k: k.value):
            if task_filter is not None and kind not in task_filter:
                continue
            templates = registry.active[kind]
            ti = int(rng.integers(len(templates)))
            samples.append(render_sample(templates[ti], rec.tokens, rec.ground_truth,
                                         split, ti, rec.participant_id))
    order = rng.permutation(len(samples))
    samples = [samples[i] for i in order]

    manifest = DatasetManifest(seed=seed, tokenizer_fingerprint=tokenizer_fingerprint,
                               split_ratio=split_ratio, task_counts={}, samples=samples)
    manifest.task_counts = manifest.recount()
    return manifest


# ---------------------------------------------------------------------------
# File I/O (manifest header line + one sample per line)


def _sample_to_dict(s: MultimodalSample) -> dict:
    return {
        "task_kind": s.task_kind.value, "participant_id": s.participant_id,
        "trial_id": s.trial_id, "prompt_text": s.prompt_text,
        "answer_text": s.answer_text, "split": s.split,
        "template_index": s.template_index,
    }


def _sample_from_dict(d: dict) -> MultimodalSample:
    return MultimodalSample(
        task_kind=TaskKind(d["task_kind"]), participant_id=d["participant_id"],
        trial_id=d["trial_id"], prompt_text=d["prompt_text"],
        answer_text=d["answer_text"], split=d["split"],
        template_index=d["template_index"],
    )


def write_dataset(manifest: DatasetManifest, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "seed": manifest.seed,
        "tokenizer_fingerprint": manifest.tokenizer_fingerprint,
        "split_ratio": manifest.split_ratio,
        "task_counts": manifest.task_counts,
        "n_samples": len(manifest.samples),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in manifest.samples:
            fh.write(json.dumps(_sample_to_dict(s), sort_keys=True) + "\n")


def read_dataset(path: Path) -> DatasetManifest:
    with open(path) as fh:
        lines = [line for line in fh if line.strip()]
    if not lines:
        raise EmptyInputError(f"empty dataset file {path}")
    header = json.loads(lines[0])
    samples = [_sample_from_dict(json.loads(line)) for line in lines[1:]]
    return DatasetManifest(seed=header["seed"],
                           tokenizer_fingerprint=header["tokenizer_fingerprint"],
                           split_ratio=header["split_ratio"],
                           task_counts=header["task_counts"], samples=samples)


# ---------------------------------------------------------------------------
# Fine-tune manifest export


FINETUNE_VARIANTS = {
    "default": {"adapter_rank": 32, "adapter_alpha": 32, "dropout": 0.1},
    "small": {"adapter_rank": 16, "adapter_alpha": 16, "dropout": 0.005},
}


def export_finetune_manifest(output_path: Path, variant: str = "default",
                             base_model: str = "google/gemma-3-1b-it") -> dict:
    """Write the adapter fine-tuning configuration for external tooling."""
    if variant not in FINETUNE_VARIANTS:
        raise ContractViolation(f"unknown variant {variant!r}; choose from {sorted(FINETUNE_VARIANTS)}")
    manifest = {
        **FINETUNE_VARIANTS[variant],
        "learning_rate": 0.0002,
        "epochs": 1.2,
        "batch_size": 10,
        "max_sequence_length": 1024,
        "prompt_tokens_in_loss": True,
        "base_model": base_model,
    }
    path = Path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest
