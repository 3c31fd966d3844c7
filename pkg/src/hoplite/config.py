"""One JSON document configures everything.

Resolution order, lowest to highest precedence: built-in defaults, the
selected preset, top-level values from the config file, environment
variables (prefix HOPLITE_), explicit overrides (CLI flags). Unknown keys
are rejected at every layer rather than silently ignored.

A config file may carry its own `"presets": {name: overlay}` section;
those extend (and may shadow) the built-in presets. Environment variables
name a top-level key (HOPLITE_SEED=3) or a section field joined with an
underscore (HOPLITE_RETRIEVAL_K=50); values are parsed as JSON when they
parse, otherwise taken as strings.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Mapping

from .condenser import CondenserConfig
from .encoder import EncoderConfig
from .evaluation import EvalConfig
from .index import IndexConfig, TRAINING_RESULTS_PER_VECTOR
from .pipeline import PipelineConfig
from .retriever import RetrievalConfig
from .scoring import FocusParams
from .supervision import LhoConfig
from .util import derive_seed

ENV_PREFIX = "HOPLITE_"


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "seed": 0,
    "threads": 1,
    "encoder": {
        "dim": 128,
        "max_passage_tokens": 256,
        "max_query_tokens": 64,
        "max_overall_tokens": 512,
    },
    "index": {
        "variant": "ivf",
        "centroid_count": None,
        "nprobe": None,
        "kmeans_iters": 25,
        "sample_factor": 64,
    },
    "retrieval": {
        "k": 25,
        "results_per_vector": 512,
        "query_focus": 32,
        "fact_focus": 8,
        "candidate_source": "query_and_facts",
    },
    "condenser": {"stage1_top_k_facts": 9, "scorer": "lexical", "tau": 0.1},
    "pipeline": {
        "hops": 4,
        "per_hop_k": [25, 25, 25, 25],
        "variant": "condensed",
        "context_scorer": "top_ranked",
        "accumulate_facts": True,
        "hybrid_total": 100,
        "verifier": None,
    },
    "supervision": {
        "k_retrieve": 1000,
        "k_hat": [20, None, None, None],
        "facts_per_expansion": 5,
        "trainer": "identity",
        "results_per_vector": TRAINING_RESULTS_PER_VECTOR,
    },
    "eval": {"retrieval_k": 100, "answer_k": 20, "supported_only": None},
}

# Dataset presets: hop counts and per-hop retrieval widths.
BUILTIN_PRESETS: dict[str, dict] = {
    "hover": {
        "pipeline": {"hops": 4, "per_hop_k": [25, 25, 25, 25]},
        "supervision": {"k_hat": [20, None, None, None]},
        "eval": {"retrieval_k": 100},
    },
    "hotpotqa": {
        "pipeline": {"hops": 2, "per_hop_k": [10, 40]},
        "supervision": {"k_hat": [20, None]},
        "eval": {"retrieval_k": 20},
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def merge_overlay(base: dict, overlay: Mapping, where: str = "config") -> None:
    """Apply overlay onto base in place, rejecting keys base does not have."""
    for key, value in overlay.items():
        if key not in base:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{where}: {key!r} must be an object")
            merge_overlay(base[key], value, f"{where}.{key}")
        else:
            base[key] = value


def _parse_env_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_env(cfg: dict, environ: Mapping[str, str] | None = None) -> None:
    env = os.environ if environ is None else environ
    for name in sorted(env):
        if not name.startswith(ENV_PREFIX):
            continue
        suffix = name[len(ENV_PREFIX):].lower()
        value = _parse_env_value(env[name])
        if suffix in cfg and not isinstance(cfg[suffix], dict):
            cfg[suffix] = value
            continue
        section, _, field = suffix.partition("_")
        if section in cfg and isinstance(cfg[section], dict) and field in cfg[section]:
            cfg[section][field] = value
            continue
        raise ConfigError(f"environment: unknown key {name}")


def load_config_file(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def resolve_config(
    preset: str | None = None,
    config_path: str | Path | None = None,
    overrides: Mapping | None = None,
    environ: Mapping[str, str] | None = None,
) -> dict:
    cfg = default_config()
    file_doc: dict = {}
    presets = copy.deepcopy(BUILTIN_PRESETS)
    if config_path is not None:
        file_doc = load_config_file(config_path)
        file_presets = file_doc.pop("presets", {})
        if not isinstance(file_presets, dict):
            raise ConfigError(f"{config_path}: 'presets' must be an object")
        presets.update(file_presets)
    if preset is not None:
        if preset not in presets:
            raise ConfigError(
                f"unknown preset {preset!r} (have: {', '.join(sorted(presets))})"
            )
        merge_overlay(cfg, presets[preset], f"presets.{preset}")
    if file_doc:
        merge_overlay(cfg, file_doc, str(config_path))
    apply_env(cfg, environ)
    if overrides:
        merge_overlay(cfg, overrides, "flags")
    return cfg


# Materializers from the resolved document to typed configs. Sub-seeds are
# derived per component so e.g. changing kmeans seeding cannot perturb the
# encoder basis.


def encoder_config(cfg: dict) -> EncoderConfig:
    sub = cfg["encoder"]
    return EncoderConfig(
        dim=sub["dim"],
        seed=derive_seed(cfg["seed"], "encoder"),
        max_passage_tokens=sub["max_passage_tokens"],
        max_query_tokens=sub["max_query_tokens"],
        max_overall_tokens=sub["max_overall_tokens"],
    )


def index_config(cfg: dict) -> IndexConfig:
    sub = cfg["index"]
    return IndexConfig(
        variant=sub["variant"],
        centroid_count=sub["centroid_count"],
        nprobe=sub["nprobe"],
        seed=derive_seed(cfg["seed"], "kmeans"),
        kmeans_iters=sub["kmeans_iters"],
        sample_factor=sub["sample_factor"],
    )


def retrieval_config(cfg: dict) -> RetrievalConfig:
    sub = cfg["retrieval"]
    return RetrievalConfig(
        k=sub["k"],
        results_per_vector=sub["results_per_vector"],
        focus=FocusParams(n_hat=sub["query_focus"], l_hat=sub["fact_focus"]),
        candidate_source=sub["candidate_source"],
    )


def condenser_config(cfg: dict) -> CondenserConfig:
    sub = cfg["condenser"]
    return CondenserConfig(
        stage1_top_k_facts=sub["stage1_top_k_facts"],
        scorer=sub["scorer"],
        tau=sub["tau"],
    )


def pipeline_config(cfg: dict, variant: str | None = None) -> PipelineConfig:
    sub = cfg["pipeline"]
    return PipelineConfig(
        hops=sub["hops"],
        per_hop_k=tuple(sub["per_hop_k"]),
        variant=variant or sub["variant"],
        retrieval=retrieval_config(cfg),
        condenser=condenser_config(cfg),
        context_scorer=sub["context_scorer"],
        accumulate_facts=sub["accumulate_facts"],
        hybrid_total=sub["hybrid_total"],
        verifier=sub["verifier"],
    )


def lho_config(cfg: dict) -> LhoConfig:
    sub = cfg["supervision"]
    return LhoConfig(
        k_retrieve=sub["k_retrieve"],
        k_hat=tuple(sub["k_hat"]),
        facts_per_expansion=sub["facts_per_expansion"],
        trainer=sub["trainer"],
        seed=derive_seed(cfg["seed"], "supervision"),
    )


def lho_retrieval_config(cfg: dict) -> RetrievalConfig:
    """Retrieval settings for supervision mining (wider, shallower probes)."""
    sub = cfg["retrieval"]
    return RetrievalConfig(
        k=cfg["supervision"]["k_retrieve"],
        results_per_vector=cfg["supervision"]["results_per_vector"],
        focus=FocusParams(n_hat=sub["query_focus"], l_hat=sub["fact_focus"]),
        candidate_source=sub["candidate_source"],
    )


def eval_config(cfg: dict) -> EvalConfig:
    sub = cfg["eval"]
    return EvalConfig(
        retrieval_k=sub["retrieval_k"],
        answer_k=sub["answer_k"],
        supported_only=sub["supported_only"],
    )
