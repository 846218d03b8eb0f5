# SPDX-License-Identifier: Apache-2.0
"""DAG workflow engine with a batched virtual-screening pipeline."""

from ._core import *  # noqa: F401,F403
from ._core import Error, IntegrityError, ParseError, PoolSpec, Workflow

__version__ = "0.1.0"
