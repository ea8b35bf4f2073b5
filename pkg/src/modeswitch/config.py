"""Experiment configuration: one YAML document, one section per module.

``load_config`` overlays a user file on the packaged defaults; unknown keys
are rejected so typos fail loudly. ``ExperimentConfig.sha256`` hashes the
fully resolved document and is stamped into every CSV; out_dir and workers are left out of the hash.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import yaml

from . import comms
from .dqn import DQNHyperparams
from .env import EpisodeConfig
from .intent import AccuracyCurve, ClassifierConfig
from .trajpred import KINDS, PredictorConfig, TrajErrorCurve

RUN_ONLY = ("out_dir", "workers")
SECTIONS = ("dataset", "channel", "reliability", "env", "classifier", "predictor", "dqn", "sweeps")


class ConfigError(ValueError):
    pass


def default_document() -> dict:
    text = resources.files("modeswitch").joinpath("default_config.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}.{k}" if path else str(k)
        if k not in base:
            raise ConfigError(f"unknown config key {where!r}")
        # curve tables are replaced wholesale, not merged knot by knot
        if isinstance(v, dict) and isinstance(base[k], dict) and k not in ("eps_c", "eps_t"):
            out[k] = _merge(base[k], v, where)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _dataclass_kwargs(cls, section: dict, name: str, skip=()) -> dict:
    known = {f.name for f in fields(cls)}
    extra = set(section) - known - set(skip)
    if extra:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
    return {k: v for k, v in section.items() if k in known}


def _prob(name, v, lo=0.0, hi=1.0):
    if not isinstance(v, (int, float)) or not lo <= v <= hi:
        raise ConfigError(f"{name} must be a probability, got {v!r}")


@dataclass
class ExperimentConfig:
    doc: dict

    def __post_init__(self):
        self.validate()

    # -- views
    def __getitem__(self, section):
        return self.doc[section]

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def out_dir(self) -> Path:
        return Path(self.doc["out_dir"])

    @property
    def workers(self) -> int:
        return int(self.doc["workers"])

    def with_overrides(self, **top) -> "ExperimentConfig":
        doc = copy.deepcopy(self.doc)
        for k, v in top.items():
            if v is not None:
                doc[k] = v
        return ExperimentConfig(doc)

    # -- builders
    def channel(self) -> comms.ChannelConfig:
        return comms.ChannelConfig(**_dataclass_kwargs(comms.ChannelConfig, self["channel"], "channel"))

    def budget(self, decoding_error=None) -> comms.ReliabilityBudget:
        r = self["reliability"]
        return comms.ReliabilityBudget(
            decoding_error=r["decoding_error"] if decoding_error is None else decoding_error,
            queuing_violation=r["queuing_violation"])

    def eps_c(self) -> AccuracyCurve:
        return AccuracyCurve.from_dict(self["env"]["eps_c"])

    def eps_t(self) -> TrajErrorCurve:
        c = TrajErrorCurve.from_dict(self["env"]["eps_t"])
        c.theta = float(self["predictor"]["theta_traj"])
        return c

    def episode_config(self, **kw) -> EpisodeConfig:
        r, e = self["reliability"], self["env"]
        base = dict(Z=e["Z"], n_classes=self["dataset"]["n_classes"], channel=self.channel(),
                    budget=self.budget(), rho=r["rho"], psi=r["psi"], detect_fail=e["detect_fail"],
                    eps_c=self.eps_c(), eps_t=self.eps_t(), persistence=e["persistence"],
                    bits_per_slot=r["bits_per_slot"], load_model=r["load_model"])
        base.update(kw)
        return EpisodeConfig(**base)

    def classifier_config(self) -> ClassifierConfig:
        kw = _dataclass_kwargs(ClassifierConfig, self["classifier"], "classifier",
                               skip=("eval_fractions", "seeds"))
        for k in ("widths", "dense", "val_fractions"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return ClassifierConfig(**kw)

    def predictor_config(self, kind: str) -> PredictorConfig:
        sec = self["predictor"]
        kw = _dataclass_kwargs(PredictorConfig, sec["common"], "predictor.common")
        kw.update(_dataclass_kwargs(PredictorConfig, sec.get(kind, {}), f"predictor.{kind}"))
        return PredictorConfig(kind=kind, **kw)

    def dqn_hyperparams(self) -> DQNHyperparams:
        kw = _dataclass_kwargs(DQNHyperparams, self["dqn"], "dqn", skip=("eval_episodes",))
        return DQNHyperparams(**kw)

    def dataset_kwargs(self) -> dict:
        d = self["dataset"]
        return dict(n_per_class=d["n_per_class"], noise_scale=d["noise_scale"], seed=d["seed"],
                    n_classes=d["n_classes"], slot_duration=d["slot_duration"])

    # -- integrity
    def validate(self) -> None:
        missing = [s for s in SECTIONS if s not in self.doc]
        if missing:
            raise ConfigError(f"missing config sections: {missing}")
        r, sw = self["reliability"], self["sweeps"]
        for k in ("decoding_error", "queuing_violation", "rho", "psi"):
            _prob(f"reliability.{k}", r[k])
        _prob("env.detect_fail", self["env"]["detect_fail"])
        _prob("env.persistence", self["env"]["persistence"])
        for g in ("pt_grid", "loss_grid", "rho_grid"):
            if not sw[g]:
                raise ConfigError(f"sweeps.{g} must be non-empty")
        for v in sw["pt_grid"]:
            _prob("sweeps.pt_grid entry", v)
        for v in sw["loss_grid"]:
            _prob("sweeps.loss_grid entry", v)
        for v in sw["rho_grid"]:
            _prob("sweeps.rho_grid entry", v)
        _prob("sweeps.proposed_pt", sw["proposed_pt"])
        if int(sw["episodes"]) < 2:
            raise ConfigError("sweeps.episodes must be >= 2")
        if int(self.doc["workers"]) < 1:
            raise ConfigError("workers must be >= 1")
        for k in self["predictor"]["kinds"]:
            if k not in KINDS:
                raise ConfigError(f"unknown predictor kind {k!r}")
        # build everything once so bad values surface here, not mid-run
        try:
            self.episode_config()
            self.classifier_config()
            for k in KINDS:
                self.predictor_config(k)
            self.dqn_hyperparams()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def resolved(self) -> dict:
        return copy.deepcopy(self.doc)

    @property
    def sha256(self) -> str:
        # where results go and how many processes compute them never change the numbers
        doc = {k: v for k, v in self.doc.items() if k not in RUN_ONLY}
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def csv_comments(self, seed: int | None = None) -> list[str]:
        return [f"config_sha256: {self.sha256}", f"seed: {self.seed if seed is None else seed}"]


def load_config(path=None, **overrides) -> ExperimentConfig:
    doc = default_document()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        user = yaml.safe_load(p.read_text()) or {}
        if not isinstance(user, dict):
            raise ConfigError(f"config file {p} is not a mapping")
        doc = _merge(doc, user)
    return ExperimentConfig(doc).with_overrides(**overrides)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.resolved(), sort_keys=False))
