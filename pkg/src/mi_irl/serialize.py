"""JSON encoding for MDPs, feature maps, trajectories, ensembles and instances.

Schema (all indices are 0-based integers)::

    mdp:        {"num_states", "num_actions", "discount", "start_dist": [S],
                 "terminal_states": [...], "transitions": [[s, a, s2, p], ...]}
    features:   {"dim", "centered", "state_features": [[F] * S]}            # phi(s2) only
             or {"dim", "centered", "transition_features": [[s, a, s2, [F]], ...]}  # nonzero entries
    trajectory: {"states": [s1, ..., sn], "actions": [a1, ..., a(n-1)]}
    dataset:    {"trajectories": [trajectory, ...], "labels": [...] | null}
    ensemble:   {"weights": [K], "params": [[F] * K]}
    instance:   {"config": {...}, "mdp", "features", "ground_truth": ensemble,
                 "cell_types": [[W] * H], "horizon"}
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .elementworld import ElementWorldConfig, ElementWorldInstance
from .em import RewardEnsemble
from .mdp import FeatureMap, TabularMdp, Trajectory


def mdp_to_dict(mdp: TabularMdp) -> dict:
    s, a, s2 = np.nonzero(mdp.transition)
    return {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "discount": mdp.discount,
        "start_dist": mdp.start_dist.tolist(),
        "terminal_states": sorted(mdp.terminal_states),
        "transitions": [[int(i), int(j), int(k), float(mdp.transition[i, j, k])] for i, j, k in zip(s, a, s2)],
    }


def mdp_from_dict(d: dict) -> TabularMdp:
    S, A = d["num_states"], d["num_actions"]
    T = np.zeros((S, A, S))
    for s, a, s2, p in d["transitions"]:
        T[s, a, s2] = p
    return TabularMdp(T, np.asarray(d["start_dist"]), d["discount"], frozenset(d["terminal_states"]))


def features_to_dict(fmap: FeatureMap) -> dict:
    v = fmap.values
    out = {"dim": fmap.dim, "centered": fmap.centered}
    if np.all(v == v[:1, :1]):
        out["state_features"] = v[0, 0].tolist()
    else:
        idx = zip(*np.nonzero(np.any(v != 0, axis=3)))
        out["transition_features"] = [[int(s), int(a), int(s2), v[s, a, s2].tolist()] for s, a, s2 in idx]
    return out


def features_from_dict(d: dict, mdp: TabularMdp) -> FeatureMap:
    if "state_features" in d:
        return FeatureMap.from_state_features(np.asarray(d["state_features"]), mdp.num_actions, d.get("centered", False))
    S, A = mdp.num_states, mdp.num_actions
    v = np.zeros((S, A, S, d["dim"]))
    for s, a, s2, vec in d["transition_features"]:
        v[s, a, s2] = vec
    return FeatureMap(v, centered=d.get("centered", False))


def trajectory_to_dict(t: Trajectory) -> dict:
    return {"states": list(t.states), "actions": list(t.actions)}


def trajectory_from_dict(d: dict) -> Trajectory:
    return Trajectory(d["states"], d["actions"])


def dataset_to_dict(trajs, labels=None) -> dict:
    return {
        "trajectories": [trajectory_to_dict(t) for t in trajs],
        "labels": None if labels is None else [int(x) for x in labels],
    }


def dataset_from_dict(d: dict):
    labels = d.get("labels")
    return [trajectory_from_dict(t) for t in d["trajectories"]], None if labels is None else np.asarray(labels)


def instance_to_dict(inst: ElementWorldInstance) -> dict:
    return {
        "config": asdict(inst.config),
        "mdp": mdp_to_dict(inst.mdp),
        "features": features_to_dict(inst.fmap),
        "ground_truth": inst.ground_truth.to_dict(),
        "cell_types": inst.cell_types.tolist(),
        "horizon": inst.config.max_len,
    }


def instance_from_dict(d: dict) -> ElementWorldInstance:
    cfg = dict(d["config"])
    if cfg.get("cluster_weights") is not None:
        cfg["cluster_weights"] = tuple(cfg["cluster_weights"])
    mdp = mdp_from_dict(d["mdp"])
    fmap = features_from_dict(d["features"], mdp)
    cell_types = np.asarray(d["cell_types"])
    state_features = fmap.values[0, 0]
    return ElementWorldInstance(ElementWorldConfig(**cfg), mdp, fmap, RewardEnsemble.from_dict(d["ground_truth"]),
                                cell_types, state_features)


def dump(obj: dict, path):
    with open(path, "w") as f:
        json.dump(obj, f, indent=1)


def load(path) -> dict:
    with open(path) as f:
        return json.load(f)
