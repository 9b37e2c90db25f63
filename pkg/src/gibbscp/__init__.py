"""Gibbs measures on subshifts of finite type, CP-chain sceneries of their torus
pushforwards, and dimension conservation under linear projections."""

__version__ = "0.1.0"

from .sft import ProductAlphabet, Sft, enumerate_words, is_transitive, validate  # noqa: E402
from .thermo import (  # noqa: E402
    GibbsModel,
    Potential,
    build_gibbs,
    gibbs_bound,
    gibbs_cylinder,
    memory_loss,
    rpf_solve,
    sample_path,
    transfer_matrix,
)
from .encoding import AdicParams, box_of, check_multiplicative_independence, l_k, xi_point  # noqa: E402
from .scenery import (  # noqa: E402
    ObservationWindow,
    PairChain,
    QueryCylinder,
    conditional_prob,
    empirical_distribution,
    scenery_orbit,
    scenery_orbits,
)
from .diagnostics import (  # noqa: E402
    TestFunctional,
    closed_form_limit,
    double_average_diagnostic,
    genericity_check,
    mixing_diagnostic,
    single_average_diagnostic,
)
from .dimension import (  # noqa: E402
    E_extrapolate,
    E_q_estimate,
    boundary_mass_check,
    conservation_check,
    measure_local_dimension,
    project_scenery_measure,
    r_entropy,
)
