"""Experiment configuration files.

A config is a YAML mapping with four sections::

    track: bandit            # or mdp
    agent:  {...}            # algorithm name plus its hyper-parameters
    env:    {...}            # environment description
    run:    {seeds: [0, 1], out: results/demo, emit: [trace, summary], workers: 1}

Every validation error carries the line of the offending entry.
The accepted keys of each section are listed in ``BANDIT_AGENT_KEYS`` and friends.
"""

import math
import os
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from adavara.errors import ConfigError

OUT_ENV_VAR = "ADAVARA_OUT"
DEFAULT_OUT = "results"

TRACKS = ("bandit", "mdp")
BANDIT_ALGORITHMS = ("adaoful", "wls", "truncated")
MDP_ALGORITHMS = ("vara",)

BANDIT_AGENT_KEYS = {
    "algorithm", "horizon", "delta", "lambda", "tau0", "sigma_min", "radius_mode", "radius_scale",
    "c0_override", "c1_override", "solver_tol", "c_trunc", "nu_max",
}
MDP_AGENT_KEYS = {
    "algorithm", "episodes", "delta", "lambda", "sigma_min", "tau0", "tilde_tau0", "beta_mode",
    "beta_scale", "beta_v_constant", "sigma_R", "sigma_R2", "variance_bound", "solver_tol",
}
BANDIT_ENV_KEYS = {"dim", "coeff_bound", "feature_bound", "noise", "arms", "theta_star", "instance_seed"}
NOISE_KEYS = {"family", "scale", "shape"}
ARMS_KEYS = {"source", "num_arms", "vectors"}
MDP_ENV_KEYS = {
    "kind", "num_states", "num_actions", "horizon", "dim", "reward_family", "reward_scale",
    "value_bound", "instance_seed", "start_state",
}
RUN_KEYS = {"seeds", "out", "emit", "workers", "name"}
EMITS = ("trace", "summary")


class _Located:
    """Plain data plus a map from key paths to source lines."""

    def __init__(self, data, lines):
        self.data = data
        self.lines = lines


def _to_python(node, path, lines):
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            if key in out:
                raise ConfigError(f"duplicate key {'.'.join(path + (key,))!r}", k.start_mark.line + 1)
            lines[path + (key,)] = k.start_mark.line + 1
            out[key] = _to_python(v, path + (key,), lines)
            lines[path + (key,)] = k.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(v, path + (i,), lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def parse_text(text, source=None):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(f"YAML syntax error: {exc.problem}", mark.line + 1 if mark else None, source)
    if node is None:
        raise ConfigError("empty configuration", 1, source)
    lines = {}
    try:
        data = _to_python(node, (), lines)
    except ConfigError as exc:
        raise ConfigError(exc.message, exc.line, source)
    return _Located(data, lines)


@dataclass
class RunSpec:
    seeds: list
    out: str
    emit: tuple = EMITS
    workers: int = 1
    name: str = "experiment"


@dataclass
class ExperimentConfig:
    track: str
    agent: dict
    env: dict
    run: RunSpec
    source: Optional[str] = None
    raw: Any = field(default=None, repr=False)

    @property
    def algorithm(self):
        return self.agent["algorithm"]


class _Validator:
    def __init__(self, located, source):
        self.lines = located.lines
        self.source = source

    def fail(self, path, message):
        line = None
        p = tuple(path)
        while p and line is None:
            line = self.lines.get(p)
            p = p[:-1]
        if line is None:
            line = self.lines.get(())
        raise ConfigError(message, line, self.source)

    def mapping(self, value, path, allowed, required=()):
        name = ".".join(map(str, path)) or "top level"
        if not isinstance(value, dict):
            self.fail(path, f"{name} must be a mapping")
        for key in value:
            if key not in allowed:
                self.fail(tuple(path) + (key,), f"unknown key {key!r} in {name}; allowed: {sorted(allowed)}")
        for key in required:
            if key not in value:
                self.fail(path, f"missing required key {key!r} in {name}")
        return value

    def number(self, value, path, positive=False, nonneg=False, integer=False, unit=False, allow=()):
        name = ".".join(map(str, path))
        if value in allow:
            return value
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"{name} must be a number, got {value!r}")
        if integer and int(value) != value:
            self.fail(path, f"{name} must be an integer")
        if not math.isfinite(value):
            self.fail(path, f"{name} must be finite")
        if positive and not value > 0:
            self.fail(path, f"{name} must be positive")
        if nonneg and not value >= 0:
            self.fail(path, f"{name} must be nonnegative")
        if unit and not 0 < value < 1:
            self.fail(path, f"{name} must lie in (0, 1)")
        return int(value) if integer else float(value)

    def choice(self, value, path, options):
        if value not in options:
            self.fail(path, f"{'.'.join(map(str, path))} must be one of {list(options)}, got {value!r}")
        return value


def _validate_bandit(v, agent, env):
    v.mapping(agent, ("agent",), BANDIT_AGENT_KEYS, ("algorithm", "horizon"))
    v.choice(agent["algorithm"], ("agent", "algorithm"), BANDIT_ALGORITHMS)
    agent["horizon"] = v.number(agent["horizon"], ("agent", "horizon"), integer=True, nonneg=True)
    if "delta" in agent:
        agent["delta"] = v.number(agent["delta"], ("agent", "delta"), unit=True)
    for key in ("lambda", "sigma_min", "radius_scale", "c0_override", "c1_override", "solver_tol", "c_trunc"):
        if key in agent:
            agent[key] = v.number(agent[key], ("agent", key), positive=True)
    if "nu_max" in agent:
        agent["nu_max"] = v.number(agent["nu_max"], ("agent", "nu_max"), nonneg=True)
    if "tau0" in agent:
        agent["tau0"] = v.number(agent["tau0"], ("agent", "tau0"), positive=True, allow=("auto",))
    if "radius_mode" in agent:
        v.choice(agent["radius_mode"], ("agent", "radius_mode"), ("theory", "scaled"))
    if agent["algorithm"] != "truncated":
        for key in ("c_trunc", "nu_max"):
            if key in agent:
                v.fail(("agent", key), f"{key} only applies to the truncated algorithm")

    from adavara.bandit_env import FAMILIES, FIXED, FRESH_UNIT

    v.mapping(env, ("env",), BANDIT_ENV_KEYS, ("dim",))
    env["dim"] = v.number(env["dim"], ("env", "dim"), integer=True, positive=True)
    for key in ("coeff_bound", "feature_bound"):
        if key in env:
            env[key] = v.number(env[key], ("env", key), positive=True)
    if "instance_seed" in env:
        env["instance_seed"] = v.number(env["instance_seed"], ("env", "instance_seed"), integer=True, nonneg=True)
    noise = env.setdefault("noise", {"family": "gaussian", "scale": 1.0})
    v.mapping(noise, ("env", "noise"), NOISE_KEYS, ("family",))
    v.choice(noise["family"], ("env", "noise", "family"), FAMILIES)
    if "scale" in noise:
        noise["scale"] = v.number(noise["scale"], ("env", "noise", "scale"), nonneg=True)
    if "shape" in noise:
        noise["shape"] = v.number(noise["shape"], ("env", "noise", "shape"), positive=True)
        if not noise["shape"] > 2:
            v.fail(("env", "noise", "shape"), "env.noise.shape must exceed 2 for a finite variance")
    arms = env.setdefault("arms", {"source": FRESH_UNIT, "num_arms": 20})
    v.mapping(arms, ("env", "arms"), ARMS_KEYS, ("source",))
    v.choice(arms["source"], ("env", "arms", "source"), (FIXED, FRESH_UNIT))
    L = env.get("feature_bound", 1.0)
    if arms["source"] == FIXED:
        vecs = arms.get("vectors")
        if not isinstance(vecs, list) or not vecs:
            v.fail(("env", "arms"), "fixed arms need a non-empty 'vectors' list")
        for i, vec in enumerate(vecs):
            p = ("env", "arms", "vectors", i)
            if not isinstance(vec, list) or len(vec) != env["dim"]:
                v.fail(p, f"arm {i} must be a list of {env['dim']} numbers")
            vecs[i] = [v.number(x, p) for x in vec]
            if math.sqrt(sum(x * x for x in vecs[i])) > L * (1 + 1e-12):
                v.fail(p, f"arm {i} exceeds feature_bound {L}")
    else:
        arms["num_arms"] = v.number(arms.get("num_arms", 20), ("env", "arms", "num_arms"), integer=True, positive=True)
    if "theta_star" in env:
        th = env["theta_star"]
        if not isinstance(th, list) or len(th) != env["dim"]:
            v.fail(("env", "theta_star"), f"env.theta_star must be a list of {env['dim']} numbers")
        env["theta_star"] = [v.number(x, ("env", "theta_star", i)) for i, x in enumerate(th)]
        if math.sqrt(sum(x * x for x in env["theta_star"])) > env.get("coeff_bound", 1.0) * (1 + 1e-12):
            v.fail(("env", "theta_star"), "env.theta_star exceeds coeff_bound")


def _validate_mdp(v, agent, env):
    from adavara.mdp_env import REWARD_FAMILIES

    v.mapping(agent, ("agent",), MDP_AGENT_KEYS, ("algorithm", "episodes"))
    v.choice(agent["algorithm"], ("agent", "algorithm"), MDP_ALGORITHMS)
    agent["episodes"] = v.number(agent["episodes"], ("agent", "episodes"), integer=True, positive=True)
    if "delta" in agent:
        agent["delta"] = v.number(agent["delta"], ("agent", "delta"), unit=True)
    for key in ("lambda", "sigma_min", "beta_scale", "beta_v_constant", "variance_bound", "solver_tol"):
        if key in agent:
            agent[key] = v.number(agent[key], ("agent", key), positive=True)
    for key in ("sigma_R", "sigma_R2"):
        if key in agent:
            agent[key] = v.number(agent[key], ("agent", key), nonneg=True)
    for key in ("tau0", "tilde_tau0"):
        if key in agent:
            agent[key] = v.number(agent[key], ("agent", key), positive=True, allow=("auto",))
    if "beta_mode" in agent:
        v.choice(agent["beta_mode"], ("agent", "beta_mode"), ("theory", "scaled"))

    v.mapping(env, ("env",), MDP_ENV_KEYS, ("num_states", "num_actions", "horizon"))
    env.setdefault("kind", "tabular")
    v.choice(env["kind"], ("env", "kind"), ("tabular", "rank_reduced"))
    for key in ("num_states", "num_actions", "horizon"):
        env[key] = v.number(env[key], ("env", key), integer=True, positive=True)
    if env["kind"] == "rank_reduced":
        if "dim" not in env:
            v.fail(("env",), "rank_reduced environments need 'dim'")
        env["dim"] = v.number(env["dim"], ("env", "dim"), integer=True, positive=True)
    elif "dim" in env:
        v.fail(("env", "dim"), "tabular environments fix dim = num_states * num_actions")
    env.setdefault("reward_family", "bounded_uniform")
    v.choice(env["reward_family"], ("env", "reward_family"), REWARD_FAMILIES)
    for key in ("reward_scale", "value_bound"):
        if key in env:
            env[key] = v.number(env[key], ("env", key), positive=key == "value_bound", nonneg=True)
    for key in ("instance_seed", "start_state"):
        if key in env:
            env[key] = v.number(env[key], ("env", key), integer=True, nonneg=True)
    if env.get("start_state", 0) >= env["num_states"]:
        v.fail(("env", "start_state"), "env.start_state must index a state")
    if env["reward_family"] in ("student_t3", "pareto_2.5") and "sigma_R2" not in agent:
        v.fail(("agent",), "heavy-tailed reward families have an infinite squared-reward variance; "
                           "set agent.sigma_R2 to a finite bound")


def _validate_run(v, run, source):
    v.mapping(run, ("run",), RUN_KEYS, ())
    seeds = run.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        v.fail(("run", "seeds"), "run.seeds must be a non-empty list of integers")
    seeds = [v.number(s, ("run", "seeds", i), integer=True, nonneg=True) for i, s in enumerate(seeds)]
    if len(set(seeds)) != len(seeds):
        v.fail(("run", "seeds"), "run.seeds must be distinct")
    emit = run.get("emit", list(EMITS))
    if not isinstance(emit, list):
        v.fail(("run", "emit"), "run.emit must be a list")
    for i, e in enumerate(emit):
        v.choice(e, ("run", "emit", i), EMITS)
    workers = v.number(run.get("workers", 1), ("run", "workers"), integer=True, positive=True)
    name = run.get("name")
    if name is None:
        name = os.path.splitext(os.path.basename(source))[0] if source else "experiment"
    if not isinstance(name, str) or not name:
        v.fail(("run", "name"), "run.name must be a non-empty string")
    out = run.get("out") or os.environ.get(OUT_ENV_VAR) or os.path.join(DEFAULT_OUT, name)
    if not isinstance(out, str):
        v.fail(("run", "out"), "run.out must be a path")
    return RunSpec(seeds, out, tuple(emit), workers, name)


def validate(located, source=None):
    v = _Validator(located, source)
    data = v.mapping(located.data, (), {"track", "agent", "env", "run"}, ("track", "agent", "env"))
    v.choice(data["track"], ("track",), TRACKS)
    agent = dict(data["agent"]) if isinstance(data["agent"], dict) else data["agent"]
    env = dict(data["env"]) if isinstance(data["env"], dict) else data["env"]
    if data["track"] == "bandit":
        _validate_bandit(v, agent, env)
    else:
        _validate_mdp(v, agent, env)
    run = _validate_run(v, data.get("run", {}) or {}, source)
    return ExperimentConfig(data["track"], agent, env, run, source, located.data)


def load_text(text, source=None):
    return validate(parse_text(text, source), source)


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path))
    return load_text(text, str(path))
