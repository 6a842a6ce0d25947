"""Pairwise preference models.

A reward maps an image vector to a scalar. ``compare`` turns two rewards
into a win/lose verdict plus the score gap. The LMM variant asks a
multimodal model yes/no questions about a render and uses the yes-count as
the reward; the prompt template and answer grammar live here, while the
wire envelope is delegated to a transport object.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .errors import AnnotationError, ParameterError, ParseError, ShapeError
from .score_oracle import GaussianMixture, log_density
from .schedule import NoiseSchedule

LMM_ENDPOINT_ENV = "PREFDISTILL_LMM_ENDPOINT"


# -- reward specs ----------------------------------------------------------

@dataclass(frozen=True)
class Proximity:
    target: np.ndarray


@dataclass(frozen=True)
class Linear:
    direction: np.ndarray


@dataclass(frozen=True)
class MixtureLikelihood:
    gmm: GaussianMixture
    sched: NoiseSchedule
    label: Optional[int] = None


@dataclass(frozen=True)
class Constant:
    """Degenerate ranker: every image gets the same score."""
    value: float = 0.0


@dataclass
class LMM:
    questions: Sequence[str]
    transport: "Transport"
    image_shape: tuple = None
    value_range: tuple = (-1.0, 1.0)

    def __post_init__(self):
        if len(self.questions) == 0:
            raise ParameterError("LMM reward needs at least one question")


RewardSpec = Proximity | Linear | MixtureLikelihood | Constant | LMM


def _vec(x, dim=None):
    x = np.asarray(x, dtype=np.float64)
    if dim is not None and x.shape != (dim,):
        raise ShapeError(f"expected shape ({dim},), got {x.shape}")
    return x


def reward(x, spec: RewardSpec) -> float:
    x = np.asarray(x, dtype=np.float64)
    if isinstance(spec, Proximity):
        d = x - _vec(spec.target, x.size)
        return -float(d @ d)
    if isinstance(spec, Linear):
        return float(_vec(spec.direction, x.size) @ x)
    if isinstance(spec, MixtureLikelihood):
        return log_density(x, 0, spec.gmm, spec.sched, spec.label)
    if isinstance(spec, Constant):
        return float(spec.value)
    if isinstance(spec, LMM):
        return float(lmm_annotate(x, spec))
    raise TypeError(f"unsupported reward spec {type(spec).__name__}")


@dataclass(frozen=True)
class PairwiseVerdict:
    win_index: int
    lose_index: int
    reward_win: float
    reward_lose: float
    s_gap: float


def verdict_from_rewards(r1: float, r2: float) -> PairwiseVerdict:
    # ties go to the first candidate
    if r1 >= r2:
        return PairwiseVerdict(1, 2, r1, r2, r1 - r2)
    return PairwiseVerdict(2, 1, r2, r1, r2 - r1)


def compare(x_a, x_b, spec: RewardSpec) -> PairwiseVerdict:
    x_a = np.asarray(x_a, dtype=np.float64)
    x_b = np.asarray(x_b, dtype=np.float64)
    if x_a.shape != x_b.shape:
        raise ShapeError(f"candidates differ in shape: {x_a.shape} vs {x_b.shape}")
    # sequential queries: a first, then b
    return verdict_from_rewards(reward(x_a, spec), reward(x_b, spec))


# -- LMM query protocol ----------------------------------------------------

_TEMPLATE_HEAD = (
    "[Task Description]: You are an expert in evaluating the alignment between a given "
    "text description and an image. Your task is to answer each of the alignment questions "
    "with either \"Yes\" or \"No\" based on the image. Provide your responses in the format "
    "specified below.\n"
    "\n"
    "[Evaluation Instruction]:\n"
    "\n"
    "1. Carefully analyze the provided image and answer questions based on the image.\n"
    "\n"
    "2. For each question, answer with either \"Yes\" or \"No\". Do not provide "
    "explanations or additional information.\n"
    "\n"
    "[Evaluation Question(s)]:\n"
)


def lmm_format_query(questions: Sequence[str]) -> str:
    if isinstance(questions, str) or len(questions) == 0:
        raise ParameterError("need a nonempty list of questions")
    parts = [_TEMPLATE_HEAD]
    for k, q in enumerate(questions, 1):
        q = " ".join(str(q).split())
        if not q:
            raise ParameterError(f"question {k} is empty")
        parts.append(f"\nQ{k}: {q}\n")
    parts.append("\n[Output Format]:\n")
    for k in range(1, len(questions) + 1):
        parts.append(f"\nA{k}: [Yes/No]\n")
    return "".join(parts)


_ANSWER = re.compile(r"^\s*A(\d+)\s*:\s*(\S.*?)\s*$", re.IGNORECASE)


def lmm_parse_response(text: str, n_questions: int) -> int:
    """Count the Yes answers among ``A1 .. An``.

    Lines that are not answer lines are ignored; a repeated, missing or
    non Yes/No answer for any index raises :class:`ParseError`.
    """
    if n_questions < 1:
        raise ParameterError("n_questions must be >= 1")
    answers = {}
    for line in text.splitlines():
        m = _ANSWER.match(line)
        if not m:
            continue
        k = int(m.group(1))
        if k < 1 or k > n_questions:
            continue
        value = m.group(2).strip().strip("[]").strip().rstrip(".").lower()
        if value not in ("yes", "no"):
            raise ParseError(f"answer {k}: expected Yes or No, got {m.group(2)!r}", index=k)
        if k in answers:
            raise ParseError(f"answer {k} given more than once", index=k)
        answers[k] = value == "yes"
    for k in range(1, n_questions + 1):
        if k not in answers:
            raise ParseError(f"missing answer line for A{k}", index=k)
    return sum(answers.values())


# -- image encoding --------------------------------------------------------

def to_uint8(x, shape, value_range=(-1.0, 1.0)) -> np.ndarray:
    """Clip to ``value_range`` and quantise to 8 bits, returning an (H, W, C) array."""
    lo, hi = value_range
    if not hi > lo:
        raise ParameterError(f"bad image range {value_range}")
    x = np.asarray(x, dtype=np.float64).reshape(shape)
    u = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    return np.round(u * 255.0).astype(np.uint8)


def encode_png(x, shape, value_range=(-1.0, 1.0)) -> bytes:
    from PIL import Image

    arr = to_uint8(x, shape, value_range)
    if arr.shape[2] == 1:
        img = Image.fromarray(arr[:, :, 0], mode="L")
    elif arr.shape[2] == 3:
        img = Image.fromarray(arr, mode="RGB")
    else:
        raise ShapeError(f"can only encode 1 or 3 channels, got {arr.shape[2]}")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def image_checksum(png: bytes) -> str:
    return hashlib.sha256(png).hexdigest()


# -- transports ------------------------------------------------------------

class Transport(Protocol):
    def query(self, prompt: str, image_png: bytes) -> str: ...


class ConstantTransport:
    """Answers every question with the same word."""

    def __init__(self, answer: str = "Yes"):
        self.answer = answer
        self.calls = 0

    def query(self, prompt, image_png):
        self.calls += 1
        n = len(re.findall(r"^Q\d+:", prompt, flags=re.MULTILINE))
        return "\n".join(f"A{k}: {self.answer}" for k in range(1, n + 1))


class ScriptedTransport:
    """Answers via ``fn(prompt, image_png) -> text``; handy for tests and demos."""

    def __init__(self, fn: Callable[[str, bytes], str]):
        self.fn = fn

    def query(self, prompt, image_png):
        return self.fn(prompt, image_png)


class BrightnessTransport:
    """Says Yes to question k of n when the mean pixel level exceeds k / (n + 1).

    A stand-in annotator whose yes-count grows with image brightness.
    """

    def query(self, prompt, image_png):
        from PIL import Image

        n = len(re.findall(r"^Q\d+:", prompt, flags=re.MULTILINE))
        level = np.asarray(Image.open(io.BytesIO(image_png)), dtype=np.float64).mean() / 255.0
        return "\n".join(f"A{k}: {'Yes' if level > k / (n + 1) else 'No'}"
                         for k in range(1, n + 1))


class RecordingTransport:
    """Wraps another transport and keeps every (image checksum -> reply) pair."""

    def __init__(self, inner: Transport):
        self.inner = inner
        self.table: dict[str, str] = {}

    def query(self, prompt, image_png):
        text = self.inner.query(prompt, image_png)
        self.table[image_checksum(image_png)] = text
        return text

    def save(self, path) -> None:
        save_replay_table(self.table, path)


class ReplayTransport:
    """Serves replies from a recorded checksum table; unknown images are errors."""

    def __init__(self, table: dict[str, str]):
        self.table = dict(table)

    @classmethod
    def load(cls, path) -> "ReplayTransport":
        return cls(load_replay_table(path))

    def query(self, prompt, image_png):
        key = image_checksum(image_png)
        try:
            return self.table[key]
        except KeyError:
            raise AnnotationError(f"no recorded reply for image {key[:12]}") from None


def save_replay_table(table: dict, path) -> None:
    Path(path).write_text(json.dumps(dict(sorted(table.items())), indent=1) + "\n")


def load_replay_table(path) -> dict:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
        raise ParameterError(f"{path}: replay table must map checksums to reply text")
    return data


class HttpTransport:
    """POSTs ``{"prompt", "image_png_base64"}`` as JSON; expects ``{"text": ...}`` back."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def query(self, prompt, image_png):
        body = json.dumps({"prompt": prompt,
                           "image_png_base64": base64.b64encode(image_png).decode("ascii")})
        req = urllib.request.Request(self.url, data=body.encode("utf-8"),
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise AnnotationError(f"LMM endpoint {self.url}: {exc}") from exc
        text = payload.get("text") if isinstance(payload, dict) else None
        if not isinstance(text, str):
            raise AnnotationError(f"LMM endpoint {self.url}: response has no 'text' field")
        return text


def make_transport(locator: str) -> Transport:
    """Build a transport from a locator string.

    ``mock:yes``, ``mock:no``, ``mock:brightness``, ``replay:<path>`` or an
    ``http(s)://`` URL.
    """
    if locator in ("mock:yes", "mock"):
        return ConstantTransport("Yes")
    if locator == "mock:no":
        return ConstantTransport("No")
    if locator == "mock:brightness":
        return BrightnessTransport()
    if locator.startswith("replay:"):
        return ReplayTransport.load(locator[len("replay:"):])
    if locator.startswith(("http://", "https://")):
        return HttpTransport(locator)
    raise ParameterError(f"unknown LMM endpoint locator {locator!r}")


def lmm_annotate(x, spec: LMM) -> int:
    x = np.asarray(x, dtype=np.float64)
    shape = spec.image_shape or (1, x.size, 1)
    png = encode_png(x, shape, spec.value_range)
    prompt = lmm_format_query(spec.questions)
    try:
        text = spec.transport.query(prompt, png)
    except AnnotationError:
        raise
    except Exception as exc:  # transport adapters may raise anything
        raise AnnotationError(f"LMM transport failed: {exc}") from exc
    return lmm_parse_response(text, len(spec.questions))
