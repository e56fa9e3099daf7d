"""Action vocabulary and the total decoding function from token sequences to
tool calls and final answers.

The vocabulary is a small synthetic symbol set. Tool invocations can be
spelled two ways:

* a full frame ``<call> <tool> [<arg>...] </call>`` where argument symbols
  select how the argument text is resolved from the context, or
* a bare tool symbol outside a frame, which is sugar for a one-symbol call
  with the default argument resolution.

Undecodable frames never raise; they become the no-op observation
``"malformed call"`` so decoding is total over arbitrary token sequences.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .types import Tool

EOS = 0
CALL_OPEN = 1
CALL_CLOSE = 2
ANSWER = 3
TOOL_BASE = 4
ARG_QUERY = 10
ARG_FOLLOW = 11

_TOOL_ORDER = (
    Tool.SEARCH,
    Tool.WEB_BROWSE,
    Tool.PYTHON_CODE,
    Tool.FILE_READER,
    Tool.IMAGE_DESCRIPTOR,
    Tool.AUDIO_CONVERTER,
)

TOOL_SYMBOL = {tool: TOOL_BASE + i for i, tool in enumerate(_TOOL_ORDER)}
SYMBOL_TOOL = {sym: tool for tool, sym in TOOL_SYMBOL.items()}

SYMBOL_NAMES = (
    "<eos>",
    "<call>",
    "</call>",
    "<answer>",
    "tool:search",
    "tool:web_browse",
    "tool:python_code",
    "tool:file_reader",
    "tool:image_descriptor",
    "tool:audio_converter",
    "arg:query",
    "arg:follow",
)

VOCAB_SIZE = len(SYMBOL_NAMES)

MALFORMED_OBSERVATION = "malformed call"

# A frame longer than this (tokens between <call> and </call>) is malformed.
MAX_FRAME_LEN = 4

_URL = re.compile(r"url://\S+")


def symbol_name(sym: int) -> str:
    return SYMBOL_NAMES[sym]


def prompt_payload(prompt: str) -> str:
    """The task payload is everything after the first ': ' marker."""
    _, _, payload = prompt.partition(": ")
    return payload.strip()


def follow_reference(last_observation: str) -> str:
    """Extract a followable reference (url) from an observation."""
    m = _URL.search(last_observation)
    return m.group(0) if m else last_observation.strip()


@dataclass
class CallEvent:
    tool: Tool
    arg_symbols: tuple[int, ...]


@dataclass
class MalformedEvent:
    pass


@dataclass
class AnswerEvent:
    pass


@dataclass
class EndEvent:
    pass


@dataclass
class Decoder:
    """Incremental decoder; feed one token at a time, collect events."""

    _frame: list[int] | None = field(default=None)

    def feed(self, sym: int):
        """Return the event triggered by this token, or None."""
        if self._frame is None:
            if sym == EOS:
                return EndEvent()
            if sym == ANSWER:
                return AnswerEvent()
            if sym == CALL_OPEN:
                self._frame = []
                return None
            if sym in SYMBOL_TOOL:
                return CallEvent(SYMBOL_TOOL[sym], ())
            # stray </call> or arg symbol outside a frame: no-op
            return None
        # inside a frame
        if sym == EOS:
            self._frame = None
            return EndEvent()
        if sym == CALL_CLOSE:
            frame = self._frame
            self._frame = None
            if (
                frame
                and frame[0] in SYMBOL_TOOL
                and all(a in (ARG_QUERY, ARG_FOLLOW) for a in frame[1:])
            ):
                return CallEvent(SYMBOL_TOOL[frame[0]], tuple(frame[1:]))
            return MalformedEvent()
        self._frame.append(sym)
        if len(self._frame) > MAX_FRAME_LEN:
            self._frame = None
            return MalformedEvent()
        return None


def resolve_argument(event: CallEvent, prompt: str, last_observation: str) -> str:
    """Map a call event's argument symbols to concrete argument text."""
    if event.arg_symbols:
        parts = []
        for sym in event.arg_symbols:
            if sym == ARG_QUERY:
                parts.append(prompt_payload(prompt))
            else:
                parts.append(follow_reference(last_observation))
        return " ".join(p for p in parts if p)
    # default resolution for bare calls: browse follows the last observation
    # when it contains a reference, everything else uses the task payload
    if event.tool is Tool.WEB_BROWSE and _URL.search(last_observation):
        return follow_reference(last_observation)
    return prompt_payload(prompt)
