import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hetq.errors import InvalidPolicy, LoadOutOfRange, NonPositiveRate
from hetq.model import EventuallyConstantSeq, PolicySpec, ServiceRateProfile, SystemParams, seq_at, validate_params

probs = st.floats(0.0, 1.0, allow_nan=False)


def test_lambda_eps_follows_scaling():
    p = SystemParams(4.0, 8.0, 0.4, 20.0)
    assert p.lambda_eps == 0.4 * 20.0
    assert SystemParams(4.0, 8.0, 0.4).lambda_eps is None


@pytest.mark.parametrize(
    "kwargs, exc",
    [
        (dict(lambda_tau=0.0, mu_tau=1.0, rho_eps=0.1), NonPositiveRate),
        (dict(lambda_tau=1.0, mu_tau=-2.0, rho_eps=0.1), NonPositiveRate),
        (dict(lambda_tau=1.0, mu_tau=math.inf, rho_eps=0.1), NonPositiveRate),
        (dict(lambda_tau=1.0, mu_tau=2.0, rho_eps=1.0), LoadOutOfRange),
        (dict(lambda_tau=1.0, mu_tau=2.0, rho_eps=-0.1), LoadOutOfRange),
        (dict(lambda_tau=1.0, mu_tau=2.0, rho_eps=0.1, mu_eps=0.0), NonPositiveRate),
    ],
)
def test_validate_rejects(kwargs, exc):
    with pytest.raises(exc):
        validate_params(SystemParams(**kwargs))


def test_rho_eps_zero_is_allowed():
    assert validate_params(SystemParams(1.0, 2.0, 0.0)).rho_eps == 0.0


def test_params_round_trip():
    p = SystemParams(4.0, 8.0, 0.4, 20.0)
    assert SystemParams.from_dict(p.to_dict()) == p


def test_seq_indexing():
    s = EventuallyConstantSeq((0.1, 0.2), 0.9)
    assert s.m == 1
    assert [s[j] for j in range(5)] == [0.1, 0.2, 0.9, 0.9, 0.9]
    assert EventuallyConstantSeq((), 0.3).m == -1
    with pytest.raises(IndexError):
        seq_at(s, -1)
    np.testing.assert_array_equal(s.head(4), [0.1, 0.2, 0.9, 0.9])
    np.testing.assert_array_equal(s.head(1), [0.1])
    assert s.sup() == 0.9 and s.inf() == 0.1


@given(st.lists(probs, max_size=20), probs)
def test_seq_round_trip(prefix, tail):
    s = EventuallyConstantSeq(tuple(prefix), tail)
    assert EventuallyConstantSeq.from_dict(s.to_dict()) == s


@given(st.lists(probs, max_size=20), probs)
def test_policy_json_round_trip(prefix, tail):
    pol = PolicySpec.from_levels(prefix, tail)
    assert PolicySpec.from_json(pol.to_json()) == pol


def test_policy_level_outside_bounds():
    with pytest.raises(InvalidPolicy):
        PolicySpec.from_levels([0.1, 0.5], 0.2, d_min=0.15, d_max=1.0)
    with pytest.raises(InvalidPolicy):
        PolicySpec.constant(0.5, d_min=0.6, d_max=0.4)


def test_profile_loads():
    nu = EventuallyConstantSeq((1.0, 0.5), 0.8)
    prof = ServiceRateProfile(nu, 4.0, 8.0)
    assert prof.rho[0] == 0.5
    assert prof.rho[1] == 1.0
    assert prof.rho[7] == 4.0 / (8.0 * 0.8)
    with pytest.raises(InvalidPolicy):
        ServiceRateProfile(EventuallyConstantSeq((), 0.0), 4.0, 8.0)
