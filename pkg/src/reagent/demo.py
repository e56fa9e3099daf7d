"""Hand-constructed policies over the hashed feature space.

`flaw_prone_params` builds a policy that answers immediately without ever
calling a tool (a reliably flawed first pass), but whose weights listen to
critique keywords: when a critique names a missing tool, the refined pass
invokes it and then answers from the observation. Used to demonstrate that
critique-conditioned refinement lifts the success rate of a frozen policy.
"""

from __future__ import annotations

import numpy as np

from .grammar import ANSWER, TOOL_SYMBOL, VOCAB_SIZE
from .policy import DEFAULT_FEATURE_DIM, PolicyParams, feature_index
from .types import Tool


# wider than the training default: hand-set rows must not collide with the
# hashed context vocabulary, and collisions scale with 1/feature_dim
DEMO_FEATURE_DIM = 2048


def flaw_prone_params(feature_dim: int = DEMO_FEATURE_DIM) -> PolicyParams:
    w = np.zeros((feature_dim, VOCAB_SIZE))

    def bump(token: str, sym: int, value: float) -> None:
        w[feature_index(token, feature_dim), sym] += value

    # without guidance: answer right away (no evidence gathered)
    bump("bias", ANSWER, 6.0)
    # once evidence exists, answer from it
    bump("state:n_obs=1", ANSWER, 14.0)
    bump("state:n_obs=2+", ANSWER, 20.0)
    # critique tool mentions steer the refined pass toward the named tool
    bump("xc:python_code|n_obs=0", TOOL_SYMBOL[Tool.PYTHON_CODE], 16.0)
    bump("xc:search|n_obs=0", TOOL_SYMBOL[Tool.SEARCH], 16.0)
    bump("xc:file_reader|n_obs=0", TOOL_SYMBOL[Tool.FILE_READER], 16.0)
    bump("xc:web_browse|n_obs=1", TOOL_SYMBOL[Tool.WEB_BROWSE], 30.0)
    return PolicyParams(w)
