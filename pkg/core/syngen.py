"""core.syngen

Synthetic corpora: a bytecode log, a matching trace file and a manifest of the
intended label of every function.

FP functions carry a fixed opcode motif and a trace that fires exactly one
labeling rule. NonFP functions carry no trace, a benign trace, or a near-miss
trace sitting just on the wrong side of one rule. Every script holding an FP
function also holds at least one NonFP function, placed first.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from core.bytelog import FunctionRecord, format_log
from core.errors import InvalidSpec
from core.labeler import MAX_FONT_VALUES, MIN_FILL_TEXT_LENGTH, MIN_MEASURE_TEXT_CALLS, Technique
from core.opcodes import V8_OPCODES, widened
from core.traces import TraceEvent
from utils.jsonl_helper import to_jsonl

logger = logging.getLogger(__name__)

DEFAULT_MOTIF: Tuple[str, ...] = (
    "CreateObjectLiteral",
    "LdaGlobal",
    "GetNamedProperty",
    "CallProperty1",
    "LdaConstant",
    "Add",
    "CallUndefinedReceiver1",
    "TestEqualStrict",
    "JumpIfFalse",
    "StaGlobal",
    "CreateClosure",
    "Construct",
)

NEAR_MISS_KINDS: Tuple[str, ...] = (
    "canvas_short_text",
    "canvas_save",
    "font_few_measures",
    "font_few_fonts",
    "audio_no_read",
    "audio_read_first",
    "webrtc_no_sdp",
)

_NAME_STEMS = (
    "init",
    "render",
    "handle",
    "compute",
    "collect",
    "update",
    "load",
    "parse",
    "build",
    "track",
)
_FONT_FAMILIES = (
    "Arial", "Verdana", "Helvetica", "Tahoma", "Georgia", "Garamond", "Courier New", "Impact",
    "Comic Sans MS", "Trebuchet MS", "Palatino", "Calibri", "Cambria", "Candara", "Consolas",
    "Constantia", "Corbel", "Futura", "Gill Sans", "Lucida Console", "Monaco", "Optima",
    "Segoe UI", "Rockwell", "Baskerville", "Didot", "Frutiger", "Myriad Pro", "Century Gothic",
    "Franklin Gothic", "Bookman", "Copperplate",
)


class CorpusSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_scripts: int = Field(default=100, ge=1)
    # exact total function count; None draws per-script counts freely
    n_functions: Optional[int] = Field(default=None, ge=1)
    functions_per_script_mu: float = math.log(8.0)
    functions_per_script_sigma: float = Field(default=0.7, ge=0.0)
    fp_fraction: float = Field(default=0.05, gt=0.0, lt=1.0)
    nonfp_length_mu: float = math.log(30.0)
    nonfp_length_sigma: float = Field(default=0.8, ge=0.0)
    nonfp_length_max: int = Field(default=2000, ge=2)
    fp_length_min: int = Field(default=100, ge=2)
    fp_length_max: int = Field(default=1000, ge=2)
    motif: Tuple[str, ...] = DEFAULT_MOTIF
    # replace every motif opcode by its operand-width variant
    rename_motif: bool = False
    near_miss_fraction: float = Field(default=0.3, ge=0.0, le=1.0)
    benign_trace_fraction: float = Field(default=0.2, ge=0.0, le=1.0)
    anonymous_fraction: float = Field(default=0.0, ge=0.0, lt=1.0)
    techniques: Tuple[Technique, ...] = tuple(Technique)
    n_domains: int = Field(default=20, ge=1)
    url_tag: str = "s"
    seed: int = 0

    @field_validator("motif")
    @classmethod
    def _motif_len(cls, v: Tuple[str, ...]) -> Tuple[str, ...]:
        if len(v) < 4:
            raise ValueError("motif needs at least 4 opcodes")
        if any(not m or "," in m or any(c.isspace() for c in m) for m in v):
            raise ValueError("motif opcodes must be non-empty, without commas or whitespace")
        return v

    @field_validator("techniques")
    @classmethod
    def _some_techniques(cls, v: Tuple[Technique, ...]) -> Tuple[Technique, ...]:
        if not v:
            raise ValueError("at least one technique is required")
        return v

    @classmethod
    def build(cls, **values: Any) -> "CorpusSpec":
        try:
            return cls(**{k: v for k, v in values.items() if v is not None})
        except ValidationError as e:
            raise InvalidSpec(e.errors()[0].get("msg", str(e)))

    def planted_motif(self) -> Tuple[str, ...]:
        return tuple(widened(m) for m in self.motif) if self.rename_motif else self.motif


@dataclass
class ManifestRow:
    script_url: str
    script_id: int
    function_name: str
    label: str
    length: int
    technique: Optional[str] = None
    near_miss: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scriptUrl": self.script_url,
            "scriptId": self.script_id,
            "functionName": self.function_name,
            "label": self.label,
            "length": self.length,
            "technique": self.technique,
            "nearMiss": self.near_miss,
        }


@dataclass
class GeneratedCorpus:
    records: List[FunctionRecord]
    events: List[TraceEvent]
    manifest: List[ManifestRow] = field(default_factory=list)

    @property
    def log_text(self) -> str:
        return format_log(self.records)

    @property
    def traces_json(self) -> str:
        payload = [e.to_dict() for e in self.events]
        return json.dumps(payload, ensure_ascii=False, separators=(",", ":")) + "\n"

    @property
    def manifest_jsonl(self) -> str:
        return to_jsonl(r.to_dict() for r in self.manifest)


# ---------------------------------------------------------------------------
# Trace builders
# ---------------------------------------------------------------------------


def _text(rng: np.random.Generator, n: int) -> str:
    alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 "
    return "".join(alphabet[i] for i in rng.integers(0, len(alphabet), size=n))


def _fonts(rng: np.random.Generator, n: int) -> List[str]:
    picks = rng.permutation(len(_FONT_FAMILIES))[:n]
    return [f"72px '{_FONT_FAMILIES[i]}', monospace" for i in picks]


def _canvas(rng: np.random.Generator, text_len: int, save: bool) -> List[Tuple[str, List[str]]]:
    calls: List[Tuple[str, List[str]]] = [("HTMLCanvasElement.getContext", ["2d"])]
    if save:
        calls.append(("CanvasRenderingContext2D.save", []))
    calls.append(("CanvasRenderingContext2D.fillRect", ["125", "1", "62", "20"]))
    calls.append(("CanvasRenderingContext2D.fillText", [_text(rng, text_len), "2", "15"]))
    calls.append(("HTMLCanvasElement.toDataURL", []))
    return calls


def _canvas_font(
    rng: np.random.Generator, measures: int, fonts: int
) -> List[Tuple[str, List[str]]]:
    calls: List[Tuple[str, List[str]]] = [("HTMLCanvasElement.getContext", ["2d"])]
    names = _fonts(rng, fonts)
    for i in range(max(measures, fonts)):
        if i < fonts:
            calls.append(("CanvasRenderingContext2D.font.set", [names[i]]))
        if i < measures:
            calls.append(("CanvasRenderingContext2D.measureText", ["mmmmmmmmmmlli"]))
    return calls


def _audio(read: bool, read_first: bool = False) -> List[Tuple[str, List[str]]]:
    calls: List[Tuple[str, List[str]]] = [
        ("BaseAudioContext.createOscillator", []),
        ("BaseAudioContext.createDynamicsCompressor", []),
        ("AudioNode.connect", []),
        ("OfflineAudioContext.startRendering", []),
    ]
    if read_first:
        return [("AudioBuffer.getChannelData", ["0"])] + calls[:1]
    if read:
        calls.append(("AudioBuffer.getChannelData", ["0"]))
    return calls


def _webrtc(rng: np.random.Generator, sdp: bool) -> List[Tuple[str, List[str]]]:
    if rng.random() < 0.5:
        opener = "RTCPeerConnection.createDataChannel"
    else:
        opener = "RTCPeerConnection.createOffer"
    calls: List[Tuple[str, List[str]]] = [(opener, [""])]
    if sdp:
        calls.append(("RTCPeerConnection.setLocalDescription", ["[object RTCSessionDescription]"]))
    return calls


def _benign() -> List[Tuple[str, List[str]]]:
    return [
        ("Navigator.userAgent.get", []),
        ("Screen.width.get", []),
        ("Navigator.language.get", []),
    ]


def fp_trace(rng: np.random.Generator, technique: Technique) -> List[Tuple[str, List[str]]]:
    if technique is Technique.CANVAS:
        return _canvas(rng, int(rng.integers(MIN_FILL_TEXT_LENGTH, 40)), save=False)
    if technique is Technique.CANVAS_FONT:
        n_fonts = int(rng.integers(MAX_FONT_VALUES + 1, len(_FONT_FAMILIES) + 1))
        return _canvas_font(rng, int(rng.integers(MIN_MEASURE_TEXT_CALLS, 40)), n_fonts)
    if technique is Technique.AUDIO:
        return _audio(read=True)
    return _webrtc(rng, sdp=True)


def near_miss_trace(rng: np.random.Generator, kind: str) -> List[Tuple[str, List[str]]]:
    if kind == "canvas_short_text":
        return _canvas(rng, MIN_FILL_TEXT_LENGTH - 1, save=False)
    if kind == "canvas_save":
        return _canvas(rng, MIN_FILL_TEXT_LENGTH + 2, save=True)
    if kind == "font_few_measures":
        return _canvas_font(rng, MIN_MEASURE_TEXT_CALLS - 1, MAX_FONT_VALUES + 5)
    if kind == "font_few_fonts":
        return _canvas_font(rng, MIN_MEASURE_TEXT_CALLS + 5, MAX_FONT_VALUES)
    if kind == "audio_no_read":
        return _audio(read=False)
    if kind == "audio_read_first":
        return _audio(read=True, read_first=True)
    if kind == "webrtc_no_sdp":
        return _webrtc(rng, sdp=False)
    raise InvalidSpec(f"unknown near-miss kind {kind!r}")


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def _script_sizes(spec: CorpusSpec, rng: np.random.Generator) -> List[int]:
    weights = rng.lognormal(
        spec.functions_per_script_mu, spec.functions_per_script_sigma, size=spec.n_scripts
    )
    if spec.n_functions is None:
        return [max(1, int(round(w))) for w in weights]
    if spec.n_functions < spec.n_scripts:
        raise InvalidSpec("n_functions must be >= n_scripts")
    extra = rng.multinomial(spec.n_functions - spec.n_scripts, weights / weights.sum())
    return [1 + int(e) for e in extra]


def _body(rng: np.random.Generator, alphabet: np.ndarray, n: int) -> List[str]:
    return [str(alphabet[i]) for i in rng.integers(0, alphabet.size, size=n)]


def _interleave(rng: np.random.Generator, per_function: List[List[TraceEvent]]) -> List[TraceEvent]:
    """Merge event lists in random order, keeping each list's own order."""
    queues = [list(reversed(evs)) for evs in per_function if evs]
    out: List[TraceEvent] = []
    while queues:
        i = int(rng.integers(0, len(queues)))
        out.append(queues[i].pop())
        if not queues[i]:
            queues.pop(i)
    return out


def generate(spec: CorpusSpec) -> GeneratedCorpus:
    rng = np.random.default_rng(spec.seed)
    motif = spec.planted_motif()
    excluded = set(spec.motif) | {widened(m) for m in spec.motif} | {"Return"}
    alphabet = np.array([m for m in V8_OPCODES if m not in excluded])
    if alphabet.size == 0:
        raise InvalidSpec("motif leaves no background opcodes")

    sizes = _script_sizes(spec, rng)
    total = sum(sizes)
    n_fp = max(1, int(round(spec.fp_fraction * total)))
    slots = [(s, j) for s, size in enumerate(sizes) for j in range(1, size)]
    if n_fp > len(slots):
        raise InvalidSpec(
            f"{n_fp} FP functions requested but only {len(slots)} mixed-script slots exist"
        )
    fp_slots = {slots[int(i)] for i in rng.choice(len(slots), size=n_fp, replace=False)}

    records: List[FunctionRecord] = []
    manifest: List[ManifestRow] = []
    per_function: List[List[TraceEvent]] = []

    for s, size in enumerate(sizes):
        domain = f"site{s % spec.n_domains}.example"
        url = f"https://{domain}/static/js/{spec.url_tag}{s}.js"
        script_id = s + 1
        for j in range(size):
            is_fp = (s, j) in fp_slots
            anonymous = not is_fp and rng.random() < spec.anonymous_fraction
            name = "" if anonymous else f"{_NAME_STEMS[j % len(_NAME_STEMS)]}{s}_{j}"

            if is_fp:
                lo, hi = math.log(spec.fp_length_min), math.log(spec.fp_length_max)
                length = max(len(motif) + 1, int(math.exp(rng.uniform(lo, hi))))
                body = _body(rng, alphabet, length - 1 - len(motif))
                at = int(rng.integers(0, len(body) + 1))
                opcodes = body[:at] + list(motif) + body[at:] + ["Return"]
            else:
                draw = rng.lognormal(spec.nonfp_length_mu, spec.nonfp_length_sigma)
                length = min(spec.nonfp_length_max, max(2, int(draw)))
                opcodes = _body(rng, alphabet, length - 1) + ["Return"]

            registers = int(rng.integers(1, 31))
            records.append(
                FunctionRecord(
                    script_url=url,
                    script_id=script_id,
                    function_name=name,
                    parameter_count=int(rng.integers(0, 5)),
                    register_count=registers,
                    frame_size=8 * registers,
                    opcodes=tuple(opcodes),
                )
            )

            technique: Optional[Technique] = None
            near_miss: Optional[str] = None
            calls: List[Tuple[str, List[str]]] = []
            if is_fp:
                technique = spec.techniques[int(rng.integers(0, len(spec.techniques)))]
                calls = _benign()[:1] + fp_trace(rng, technique)
            elif not anonymous:
                u = rng.random()
                if u < spec.near_miss_fraction:
                    near_miss = NEAR_MISS_KINDS[int(rng.integers(0, len(NEAR_MISS_KINDS)))]
                    calls = near_miss_trace(rng, near_miss)
                elif u < spec.near_miss_fraction + spec.benign_trace_fraction:
                    calls = _benign()

            per_function.append(
                [
                    TraceEvent(
                        api=api,
                        args=tuple(args),
                        script_url=url,
                        script_id=script_id,
                        function_name=name,
                        line=1 + j,
                        column=1 + k,
                        page_url=f"https://{domain}/",
                    )
                    for k, (api, args) in enumerate(calls)
                ]
            )
            manifest.append(
                ManifestRow(
                    script_url=url,
                    script_id=script_id,
                    function_name=name,
                    label="FP" if is_fp else "NonFP",
                    length=len(opcodes),
                    technique=technique.value if technique is not None else None,
                    near_miss=near_miss,
                )
            )

    events = _interleave(rng, per_function)
    logger.info(
        "Generated %d scripts, %d functions (%d FP), %d trace events",
        len(sizes),
        total,
        n_fp,
        len(events),
    )
    return GeneratedCorpus(records=records, events=events, manifest=manifest)
