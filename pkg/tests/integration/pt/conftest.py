import pytest

import pyregime
from pyregime import pt


@pytest.fixture
def oracle_model():
    def factory(mdp, gamma, lam):
        result = pt.proximal_value_iteration(mdp, gamma, lam)
        enumeration = pyregime.StateEnumeration.range(mdp.num_states)
        v_basis = pyregime.TabularIndicatorBasis(enumeration)
        q_basis = pyregime.TabularIndicatorBasis(
            enumeration, num_actions=mdp.num_actions
        )
        return pt.PTModel(
            pyregime.LinearFunctional(v_basis, result.values),
            pyregime.LinearFunctional(q_basis, result.q_values.t().flatten()),
            gamma,
            pt.ProximitySpec(lam),
        )

    return factory
