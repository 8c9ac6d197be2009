"""HTTP chat service over tokenized trials.

The mock backend answers template-recognized questions with the trained
baselines; the external backend relays the chat-formatted multimodal prompt
to a fine-tuned-model endpoint. All shared state (models, trials, templates)
is immutable after startup, so concurrent requests need no coordination.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import dataset as ds
from .baselines import token_histogram
from .errors import UpstreamError
from .external import ExternalConfig, external_complete
from .gbdt import TreeEnsemble
from .motion import JOINT_NAMES
from .pipeline import Workspace, load_baselines, read_index
from .tokenizer import TokenSequence, load_model, read_token_corpus

INTENT_THRESHOLD = 3  # overlapping normalized words with the best template

UNKNOWN_INTENT_REPLY = (
    "I can answer template questions about this trial: the activity being "
    "performed, whether the gait is impaired, the likely diagnosis, the "
    "assistive device in use, fall history, walking cadence and speed, and "
    "timed-up-and-go or four-square-step-test completion times."
)
NO_IMPAIRMENT_REPLY = (
    "No gait impairment is detected for this trial, so a diagnosis is not offered."
)

_WORD_RE = re.compile(r"[a-z0-9/]+")


def _words(text: str) -> frozenset[str]:
    return frozenset(_WORD_RE.findall(text.casefold()))


@dataclass
class IntentClassifier:
    """Word-overlap scoring of a message against every active template prompt."""

    threshold: int = INTENT_THRESHOLD
    _templates: list[tuple[ds.TaskKind, frozenset[str]]] = field(default_factory=list)

    def __post_init__(self):
        registry = ds.load_templates()
        for kind in ds.TaskKind:
            for tpl in registry.active[kind]:
                prompt = tpl.prompt_pattern.replace(ds.MOTION_PLACEHOLDER, " ")
                self._templates.append((kind, _words(prompt)))

    def classify(self, message: str) -> ds.TaskKind | None:
        msg_words = _words(message)
        best_kind, best_score = None, 0
        for kind, tpl_words in self._templates:
            score = len(msg_words & tpl_words)
            if score > best_score:
                best_kind, best_score = kind, score
        return best_kind if best_score >= self.threshold else None


@dataclass
class ChatAssets:
    tokens_by_trial: dict[str, TokenSequence]
    index: dict[str, dict]
    models: dict[ds.TaskKind, TreeEnsemble]
    codebook_size: int
    intent: IntentClassifier
    cohort_dir: Path | None = None


def load_assets(ws: Workspace, model_dir: Path | None = None) -> ChatAssets:
    model_dir = Path(model_dir) if model_dir is not None else ws.models_dir
    tokens = read_token_corpus(ws.require(ws.tokens_path, "tokenize"))
    index = read_index(ws)
    models, _ = load_baselines(model_dir / "baselines")
    tok_model = load_model(model_dir / "tokenizer.bin")
    return ChatAssets(
        tokens_by_trial={t.trial_id: t for t in tokens},
        index=index,
        models=models,
        codebook_size=tok_model.config.codebook_size_k,
        intent=IntentClassifier(),
        cohort_dir=ws.cohort_dir,
    )


def mock_reply(assets: ChatAssets, trial_id: str, message: str) -> tuple[str, str]:
    """Answer with the trained baseline matching the message's intent.

    Returns (reply, intent name). Deterministic: same request, same reply.
    """
    kind = assets.intent.classify(message)
    if kind is None:
        return UNKNOWN_INTENT_REPLY, "Unknown"
    tokens = assets.tokens_by_trial[trial_id]
    hist = token_histogram(tokens, assets.codebook_size)[None, :]

    if kind == ds.TaskKind.DIAGNOSIS:
        impaired_model = assets.models.get(ds.TaskKind.IMPAIRED)
        if impaired_model is not None and impaired_model.predict_label(hist)[0] == "No":
            return NO_IMPAIRMENT_REPLY, kind.value
    model = assets.models.get(kind)
    if model is None:
        return UNKNOWN_INTENT_REPLY, "Unknown"
    spec = ds.TASK_SPECS[kind]
    if spec.is_regression:
        reply = spec.format_value(float(model.predict_value(hist)[0]))
    else:
        reply = model.predict_label(hist)[0]
    return reply, kind.value


def external_reply(assets: ChatAssets, config: ExternalConfig, trial_id: str,
                   message: str) -> str:
    """Relay the chat-formatted multimodal prompt to the external endpoint."""
    span = ds.serialize_motion_span(assets.tokens_by_trial[trial_id])
    prompt = ds.format_chat_prompt(f"{span} {message}")
    return external_complete(config, prompt)


class ChatTurn(BaseModel):
    role: str = Field(pattern="^(user|model)$")
    text: str


class ChatRequestBody(BaseModel):
    trial_id: str
    message: str = Field(min_length=1)
    history: list[ChatTurn] = Field(default_factory=list)


def create_app(assets: ChatAssets, backend: str = "mock",
               external_config: ExternalConfig | None = None,
               ui_dir: Path | None = None) -> FastAPI:
    if backend not in ("mock", "external"):
        raise ValueError(f"backend must be mock|external, got {backend!r}")
    if backend == "external" and external_config is None:
        raise ValueError("external backend requires a base_url (BIOMECH_EXTERNAL_BASE_URL)")
    app = FastAPI(title="biomech chat service")
    # The browser client may be served from a different origin than the API.
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/api/trials")
    def list_trials():
        items = []
        for trial_id in sorted(assets.index):
            meta = assets.index[trial_id]
            items.append({
                "trial_id": trial_id,
                "participant_id": meta["participant_id"],
                "activity": meta["activity"],
                "duration_s": meta["duration_s"],
            })
        return items

    @app.get("/api/trials/{trial_id}")
    def trial_detail(trial_id: str, stride: int = 4):
        if trial_id not in assets.index:
            raise HTTPException(status_code=404, detail=f"unknown trial {trial_id}")
        meta = assets.index[trial_id]
        tokens = assets.tokens_by_trial.get(trial_id)
        traces = None
        if assets.cohort_dir is not None:
            from .motion import read_trial

            path = assets.cohort_dir / meta["participant_id"] / f"{trial_id}.json"
            if path.exists():
                traj = read_trial(path)
                joints = traj.joint_angles[::max(1, stride)]
                traces = {
                    "stride": max(1, stride),
                    "frame_rate_hz": traj.frame_rate_hz,
                    "channels": list(JOINT_NAMES),
                    "data": np.round(joints, 5).tolist(),
                }
        return {
            "trial_id": trial_id,
            "participant_id": meta["participant_id"],
            "activity": meta["activity"],
            "duration_s": meta["duration_s"],
            "tokens": list(tokens.tokens) if tokens else [],
            "joint_traces": traces,
        }

    @app.post("/api/chat")
    def chat(body: ChatRequestBody):
        if body.trial_id not in assets.index:
            raise HTTPException(status_code=404, detail=f"unknown trial {body.trial_id}")
        # Only the newest user message drives routing; history is accepted for
        # interface compatibility but the backends are single-turn.
        if backend == "mock":
            reply, intent = mock_reply(assets, body.trial_id, body.message)
            return {"reply": reply, "intent": intent, "backend": "mock"}
        try:
            reply = external_reply(assets, external_config, body.trial_id, body.message)
        except UpstreamError as exc:
            raise HTTPException(status_code=502,
                                detail=f"upstream failure ({exc})") from exc
        return {"reply": reply, "intent": "External", "backend": "external"}

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
