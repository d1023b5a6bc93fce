"""Session ingestion, byte-level tokenization, and sequence preparation."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import BadTokenId, MalformedSession


@dataclass(frozen=True)
class Turn:
    speaker: str
    text: str


@dataclass(frozen=True)
class SessionDocument:
    dialogue: tuple[Turn, ...]

    def render(self) -> str:
        return "".join(f"{t.speaker}: {t.text}\n" for t in self.dialogue)

    def to_json(self) -> dict:
        return {"dialogue": [{"speaker": t.speaker, "text": t.text} for t in self.dialogue]}


@dataclass
class TokenCorpus:
    ids: np.ndarray
    source: str = ""

    def __len__(self) -> int:
        return len(self.ids)

    def digest(self) -> str:
        return sequence_hash(self.ids)


def sequence_hash(ids) -> str:
    return hashlib.sha256(np.asarray(ids, dtype="<i8").tobytes()).hexdigest()


def byte_tokenize(text: str) -> np.ndarray:
    """One id per UTF-8 byte (ids 0-255)."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.int64)


def byte_detokenize(ids) -> str:
    return bytes(int(i) for i in ids).decode("utf-8", errors="replace")


def parse_session(payload) -> SessionDocument:
    turns = payload.get("dialogue") if isinstance(payload, dict) else payload
    if not isinstance(turns, list) or not turns:
        raise MalformedSession("session needs a non-empty dialogue array")
    parsed = []
    for i, turn in enumerate(turns):
        if not isinstance(turn, dict) or "speaker" not in turn or "text" not in turn:
            raise MalformedSession(f"turn {i} lacks speaker/text")
        speaker, text = turn["speaker"], turn["text"]
        if not isinstance(speaker, str) or not speaker or not isinstance(text, str):
            raise MalformedSession(f"turn {i} has an empty speaker or non-string text")
        parsed.append(Turn(speaker, text))
    return SessionDocument(tuple(parsed))


def _is_pretokenized(payload) -> bool:
    return isinstance(payload, list) and all(
        isinstance(v, int) and not isinstance(v, bool) for v in payload
    )


def load_ids(path: str | Path, vocab: int = 256) -> np.ndarray:
    """Token ids of one file: pre-tokenized id arrays pass through verbatim,
    session documents are rendered and byte-tokenized."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if _is_pretokenized(payload) and payload:
        ids = np.asarray(payload, dtype=np.int64)
        if ids.min() < 0 or ids.max() >= vocab:
            raise BadTokenId(f"{path}: ids must lie in [0, {vocab})")
        return ids
    return byte_tokenize(parse_session(payload).render())


def ingest_sessions(paths: Iterable[str | Path], vocab: int = 256) -> TokenCorpus:
    """Concatenate the token ids of ``paths`` in order."""
    paths = [Path(p) for p in paths]
    parts = [load_ids(p, vocab) for p in paths]
    ids = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    return TokenCorpus(ids, source=",".join(p.name for p in paths))


def corpus_files(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"corpus directory {directory} does not exist")
    files = sorted(directory.glob("*.json"))
    if not files:
        raise FileNotFoundError(f"no *.json sessions in {directory}")
    return files


def load_corpus(directory: str | Path, vocab: int = 256) -> TokenCorpus:
    return ingest_sessions(corpus_files(directory), vocab)


def corpus_digest(directory: str | Path) -> str:
    h = hashlib.sha256()
    for path in corpus_files(directory):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def prepare_sequence(corpus: TokenCorpus | np.ndarray, n: int) -> np.ndarray:
    """Exactly ``n`` ids: truncate, or right-pad with id 0."""
    if n < 1:
        raise ValueError("sequence length must be at least 1")
    ids = np.asarray(corpus.ids if isinstance(corpus, TokenCorpus) else corpus, dtype=np.int64)
    if len(ids) >= n:
        return ids[:n].copy()
    return np.concatenate([ids, np.zeros(n - len(ids), dtype=np.int64)])


# ---------------------------------------------------------------------------
# deterministic synthetic dialogue

_OPENERS = [
    "Thank you both for coming in today.",
    "How has the week been since we last met?",
    "Let's start by checking in on how you're each feeling.",
]
_THERAPIST = [
    "It sounds like that moment left you feeling unheard.",
    "What did you notice in your body when that happened?",
    "Can you say more about what you needed right then?",
    "I'm hearing a lot of frustration, and also some hope.",
    "Let's slow down and try that conversation again.",
    "How do you each understand what went wrong there?",
    "That took courage to say out loud.",
    "What would it look like to ask for that directly?",
]
_CLIENT = [
    "I just felt like nobody was listening to me.",
    "Honestly, I was exhausted and snapped at them.",
    "We keep having the same argument about money.",
    "I worry that if I bring it up, it turns into a fight.",
    "I didn't realise it affected you that much.",
    "Some days are better, but the evenings are hard.",
    "I want us to be able to talk without shutting down.",
    "It was nice when we went for that walk on Sunday.",
    "I get anxious when plans change at the last minute.",
    "I think I was trying to protect myself.",
]
_CLOSERS = [
    "Let's pause there for today.",
    "For next week, try one check-in conversation each evening.",
    "You both did meaningful work today.",
]


def synthetic_session(seed: int, turns: int = 60) -> SessionDocument:
    """A reproducible therapist/two-client dialogue with opening and closing phases."""
    rng = random.Random(seed)
    dialogue = [Turn("Therapist", rng.choice(_OPENERS))]
    clients = ["Client A", "Client B"]
    for i in range(max(turns - 2, 0)):
        if i % 2:
            dialogue.append(Turn("Therapist", rng.choice(_THERAPIST)))
        else:
            dialogue.append(Turn(rng.choice(clients), rng.choice(_CLIENT)))
    dialogue.append(Turn("Therapist", rng.choice(_CLOSERS)))
    return SessionDocument(tuple(dialogue))


def write_synthetic_corpus(directory: str | Path, sessions: int = 4, seed: int = 0, turns: int = 60) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(sessions):
        path = directory / f"session_{i:02d}.json"
        path.write_text(json.dumps(synthetic_session(seed * 1000 + i, turns).to_json(), indent=1), encoding="utf-8")
        paths.append(path)
    return paths
