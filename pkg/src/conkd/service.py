"""HTTP chat service hosting the distilled student.

Each user message runs classify -> generate (with the forced [REC]/[GEN]
prefix) -> annotation assembly. Sessions are in-memory, histories are
append-only, and message handling within a session is serialized; model
parameters are shared read-only and never exposed.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from .data.corpus import Turn
from .data.vocab import REC, SPECIAL_TOKENS, Vocabulary
from .dialogue import DecodeConfig, Seq2SeqLM, history_ids
from .distill import DistillConfig, TurnClassifier, classify_turn
from .metrics import generate_record
from .recommender import RecEvalSession


class MessageRequest(BaseModel):
    text: str


class ItemOut(BaseModel):
    id: int
    title: str
    rank: int
    score: float


class GateStep(BaseModel):
    model_config = ConfigDict(populate_by_name=True)
    t: int
    item_mass: float
    lam: float = Field(alias="lambda")


class MessageResponse(BaseModel):
    model_config = ConfigDict(populate_by_name=True)
    text: str
    items: list[ItemOut]
    classifier_decision: str
    gate_trace: list[GateStep]


class TurnOut(BaseModel):
    speaker: str
    text: str


class SessionOut(BaseModel):
    session_id: str
    history: list[TurnOut]
    annotations: list[MessageResponse]


@dataclass
class ChatSession:
    id: str
    turns: list[Turn] = field(default_factory=list)
    annotations: list[MessageResponse] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass
class ServeState:
    vocab: Vocabulary
    catalog: dict[int, str]
    student: Seq2SeqLM
    classifier: TurnClassifier
    distill: DistillConfig
    decode: DecodeConfig
    rec_session: RecEvalSession | None = None
    sessions: dict[str, ChatSession] = field(default_factory=dict)


def _gate_value(state: ServeState, mass: float) -> float:
    if state.distill.gate == "hard":
        return 1.0 if mass >= state.distill.eta else 0.0
    if state.distill.gate == "soft":
        return mass
    return state.distill.fixed_value


def _render_text(ids, vocab: Vocabulary) -> str:
    words = [vocab.token(t) for t in ids if t >= vocab.word_start]
    return " ".join(words)


def _annotate(state: ServeState, session: ChatSession) -> MessageResponse:
    hist = history_ids(session.turns, state.student.config.max_len)
    decision = classify_turn(state.classifier, hist)
    record = generate_record(state.student, state.vocab, session.id,
                             len(session.turns), hist, [], state.decode,
                             k_max=5, forced_prefix=decision)
    items: list[ItemOut] = []
    seen = set()
    for slot in record.slots:
        for rank, (cid, score) in enumerate(slot.candidates, start=1):
            if cid not in seen:
                seen.add(cid)
                items.append(ItemOut(id=cid, title=state.catalog.get(cid, f"@{cid}"),
                                     rank=rank, score=score))
    if not record.slots and state.rec_session is not None:
        probs = state.rec_session.item_probs(session.turns)
        for rank, cid in enumerate(state.rec_session.topk(session.turns, 5), start=1):
            idx = state.vocab.item_ids.index(cid)
            items.append(ItemOut(id=cid, title=state.catalog.get(cid, f"@{cid}"),
                                 rank=rank, score=float(probs[idx])))
    trace = [GateStep(t=t, item_mass=m, lam=_gate_value(state, m))
             for t, m in enumerate(record.step_item_mass)]
    text = _render_text(record.generated_ids, state.vocab)
    reply = MessageResponse(text=text, items=items,
                            classifier_decision="REC" if decision == REC else "GEN",
                            gate_trace=trace)
    agent_text = f"{SPECIAL_TOKENS[decision]} {text}".strip()
    session.turns.append(Turn(speaker="agent", text=agent_text,
                              token_ids=list(record.generated_ids)))
    session.annotations.append(reply)
    return reply


def create_app(state: ServeState) -> FastAPI:
    app = FastAPI(title="conkd chat service")

    def get_session(session_id: str) -> ChatSession:
        session = state.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    @app.get("/health")
    def health():
        return {"status": "ok", "items": state.vocab.n_items,
                "vocab": len(state.vocab)}

    @app.post("/sessions")
    def create_session():
        session = ChatSession(id=uuid.uuid4().hex)
        state.sessions[session.id] = session
        return {"session_id": session.id, "history": []}

    @app.get("/sessions/{session_id}", response_model=SessionOut)
    def get_history(session_id: str):
        session = get_session(session_id)
        return SessionOut(
            session_id=session.id,
            history=[TurnOut(speaker=t.speaker, text=t.text) for t in session.turns],
            annotations=session.annotations)

    @app.post("/sessions/{session_id}/messages", response_model=MessageResponse,
              response_model_by_alias=True)
    def post_message(session_id: str, message: MessageRequest):
        session = get_session(session_id)
        if not message.text.strip():
            raise HTTPException(status_code=422, detail="empty message")
        with session.lock:  # at most one in-flight generation per session
            session.turns.append(Turn(speaker="user", text=message.text,
                                      token_ids=state.vocab.encode(message.text)))
            return _annotate(state, session)

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        get_session(session_id)
        del state.sessions[session_id]
        return {"deleted": session_id}

    return app
