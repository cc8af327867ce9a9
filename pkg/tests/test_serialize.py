import json

import numpy as np

from mi_irl import serialize as ser
from mi_irl.elementworld import ElementWorldConfig, generate, make_dataset
from mi_irl.mdp import FeatureMap

from conftest import random_problem


def test_instance_round_trip():
    inst = generate(ElementWorldConfig(num_elements=2, height=4, seed=1, cluster_weights=(0.3, 0.7)))
    back = ser.instance_from_dict(json.loads(json.dumps(ser.instance_to_dict(inst))))
    np.testing.assert_array_equal(back.mdp.transition, inst.mdp.transition)
    np.testing.assert_array_equal(back.fmap.values, inst.fmap.values)
    np.testing.assert_array_equal(back.ground_truth.params, inst.ground_truth.params)
    assert back.config == inst.config


def test_general_features_and_dataset_round_trip():
    mdp, fmap, L, _ = random_problem(4, S=3, A=2, F=2)
    back_mdp = ser.mdp_from_dict(json.loads(json.dumps(ser.mdp_to_dict(mdp))))
    np.testing.assert_array_equal(back_mdp.transition, mdp.transition)
    back = ser.features_from_dict(ser.features_to_dict(fmap), back_mdp)
    assert isinstance(back, FeatureMap)
    np.testing.assert_array_equal(back.values, fmap.values)

    inst = generate(ElementWorldConfig(num_elements=2, height=4, seed=1))
    trajs, labels = make_dataset(inst, 5, seed=0)
    t2, l2 = ser.dataset_from_dict(json.loads(json.dumps(ser.dataset_to_dict(trajs, labels))))
    assert [t.states for t in t2] == [t.states for t in trajs]
    np.testing.assert_array_equal(l2, labels)
