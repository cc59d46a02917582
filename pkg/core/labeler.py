"""core.labeler

Rule-based fingerprinting labels for one function's API-call trace.

Four techniques are recognized: canvas image extraction, canvas font probing,
audio rendering and WebRTC local-description access. A function is labeled FP
when at least one rule fires; the verdict keeps every rule that fired.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Tuple

from core.traces import FunctionKey, FunctionTrace

logger = logging.getLogger(__name__)


class Technique(str, Enum):
    CANVAS = "Canvas"
    CANVAS_FONT = "CanvasFont"
    AUDIO = "Audio"
    WEBRTC = "WebRTC"


MIN_FILL_TEXT_LENGTH = 10
MIN_MEASURE_TEXT_CALLS = 20
# strictly more than this many distinct font values
MAX_FONT_VALUES = 20

_CONTEXTS = ("CanvasRenderingContext2D", "OffscreenCanvasRenderingContext2D")
_FILL_TEXT = frozenset(f"{c}.fillText" for c in _CONTEXTS)
_CANVAS_DISQUALIFIERS = frozenset(
    [f"{c}.{m}" for c in _CONTEXTS for m in ("save", "restore", "addEventListener")]
    + ["HTMLCanvasElement.addEventListener"]
)

_AUDIO_SOURCES = frozenset(
    {
        "BaseAudioContext.createOscillator",
        "BaseAudioContext.createDynamicsCompressor",
        "OfflineAudioContext.startRendering",
        "AudioNode.connect",
    }
)
_AUDIO_READ = "AudioBuffer.getChannelData"

_RTC_OPEN = frozenset({"RTCPeerConnection.createDataChannel", "RTCPeerConnection.createOffer"})
_RTC_SDP = "RTCPeerConnection.setLocalDescription"


def canvas_heuristic(t: FunctionTrace) -> bool:
    has_fill = False
    long_text = False
    has_export = False
    for e in t.events:
        if e.api in _CANVAS_DISQUALIFIERS:
            return False
        if e.api in _FILL_TEXT:
            has_fill = True
            if len(e.first_arg) >= MIN_FILL_TEXT_LENGTH:
                long_text = True
        elif e.api.endswith(".toDataURL"):
            has_export = True
    return has_fill and long_text and has_export


def canvas_font_heuristic(t: FunctionTrace) -> bool:
    measures = 0
    fonts = set()
    for e in t.events:
        if e.api.endswith(".measureText"):
            measures += 1
        elif e.api.endswith(".font.set") and e.args:
            fonts.add(e.args[0])
    return measures >= MIN_MEASURE_TEXT_CALLS and len(fonts) > MAX_FONT_VALUES


def audio_heuristic(t: FunctionTrace) -> bool:
    """A channel read must come after the earliest audio graph/render call."""
    first_source = -1
    for i, e in enumerate(t.events):
        if first_source < 0:
            if e.api in _AUDIO_SOURCES:
                first_source = i
        elif e.api == _AUDIO_READ:
            return True
    return False


def webrtc_heuristic(t: FunctionTrace) -> bool:
    apis = {e.api for e in t.events}
    return bool(apis & _RTC_OPEN) and _RTC_SDP in apis


_RULES: Tuple[Tuple[Technique, Any], ...] = (
    (Technique.CANVAS, canvas_heuristic),
    (Technique.CANVAS_FONT, canvas_font_heuristic),
    (Technique.AUDIO, audio_heuristic),
    (Technique.WEBRTC, webrtc_heuristic),
)


def sort_techniques(techniques: Iterable[Technique]) -> List[Technique]:
    order = {t: i for i, (t, _) in enumerate(_RULES)}
    return sorted(set(techniques), key=order.__getitem__)


@dataclass(frozen=True)
class HeuristicVerdict:
    key: FunctionKey
    techniques: FrozenSet[Technique]

    @property
    def is_fp(self) -> bool:
        return bool(self.techniques)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scriptUrl": self.key[0],
            "scriptId": self.key[1],
            "functionName": self.key[2],
            "isFp": self.is_fp,
            "techniques": [t.value for t in sort_techniques(self.techniques)],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "HeuristicVerdict":
        return cls(
            key=(str(d["scriptUrl"]), int(d["scriptId"]), str(d["functionName"])),
            techniques=frozenset(Technique(t) for t in d.get("techniques") or []),
        )


def label(t: FunctionTrace) -> HeuristicVerdict:
    fired = frozenset(tech for tech, rule in _RULES if rule(t))
    return HeuristicVerdict(key=t.key, techniques=fired)


def label_all(traces: Iterable[FunctionTrace]) -> List[HeuristicVerdict]:
    verdicts = [label(t) for t in traces]
    fp = sum(1 for v in verdicts if v.is_fp)
    logger.info("Labeled %d function traces, %d fingerprinting", len(verdicts), fp)
    return verdicts
