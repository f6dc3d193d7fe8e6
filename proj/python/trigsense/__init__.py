# Copyright 2026 The Trigsense Authors.
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Sensitivity-guided textual trigger search toolkit.

The pipeline runs over a run directory of schema-tagged artifacts; see
`Run` for the phases. Python objects can serve as backends through
`wrap_model` and `register_backend`.
"""

from trigsense._core import (
    CapabilityMissing,
    ConfigError,
    DataError,
    Error,
    InternalError,
    InvalidInput,
    Model,
    Run,
    UndefinedResult,
    backend_ids,
    config_hash,
    ground_truth_sensitivity,
    onion_scores,
    read_artifact,
    read_records,
    register_backend,
    report,
    select_sensitive_positions,
    selection_threshold,
    spearman,
    src,
    stealthiness,
    tokenize,
    unregister_backend,
    wrap_model,
    write_sentiment_corpus,
)

__all__ = [
    "CapabilityMissing",
    "ConfigError",
    "DataError",
    "Error",
    "InternalError",
    "InvalidInput",
    "Model",
    "Run",
    "UndefinedResult",
    "backend_ids",
    "config_hash",
    "ground_truth_sensitivity",
    "onion_scores",
    "read_artifact",
    "read_records",
    "register_backend",
    "report",
    "select_sensitive_positions",
    "selection_threshold",
    "spearman",
    "src",
    "stealthiness",
    "tokenize",
    "unregister_backend",
    "wrap_model",
    "write_sentiment_corpus",
]
