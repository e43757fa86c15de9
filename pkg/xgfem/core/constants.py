from enum import Enum


class Constants(Enum):
    # quadrature
    QUAD_MAX_TRIANGLE = 40
    QUAD_MAX_EDGE = 40
    QUAD_EXTRA_DEGREE = 3

    # penalties
    DEFAULT_RHO = 1.0
    DEFAULT_C_ETA = 1.0
    DEFAULT_C_TAU = 1.0
    HDG_PENALTY_PRODUCT = 0.25

    # tolerances
    GEOMETRY_TOL = 1e-12
    INCLUSION_TOL = 1e-10
    SOLVER_TOL = 1e-10
    EOC_TOLERANCE = 0.15
    LIMIT_SLOPE_MIN = 0.4
    INFSUP_RATIO_MAX = 10.0
    LIMIT_NOISE_FACTOR = 1e3
    LIMIT_MIN_POINTS = 4
    EOC_NOISE_FLOOR = 1e-14
    BETA_MIN = 1e-8
    ELIMINATION_TOL = 1e-9
    SYMMETRY_TOL = 1e-10
    DENSE_DOF_CAP = 3000

    DEFAULT_LOG_LEVEL = 'INFO'
    CSV_FLOAT_FORMAT = '%.10e'

    BOUNDARY_SIDES = ('left', 'right', 'bottom', 'top')

    PRESETS: dict[str, dict] = {
        # Degrees are offsets from k; None is the trivial space {0}.
        # solve: full | pcheck | ucheck | both | hybridize | wg_phat
        'grad': dict(q_family='vector', k_p=0, k_pcheck=0, k_u=1, k_ucheck=0,
                     regime='grad', label='gradient-based', solve='full'),
        'div-rt': dict(q_family='rt', k_p=0, k_pcheck=0, k_u=0, k_ucheck=0,
                       regime='div', label='divergence-based', solve='full'),
        'div-p': dict(q_family='vector', k_p=1, k_pcheck=0, k_u=0, k_ucheck=0,
                      regime='div', label='divergence-based', solve='full'),
        'hdg-grad': dict(q_family='vector', k_p=0, k_pcheck=1, k_u=1, k_ucheck=1,
                         regime='grad', c_eta=0.25, label='gradient-based', solve='hybridize', table=True),
        'hdg-div': dict(q_family='vector', k_p=1, k_pcheck=1, k_u=0, k_ucheck=1,
                        regime='div', c_tau=0.25, label='divergence-based', solve='hybridize', table=True),
        'hdg-rt': dict(q_family='rt', k_p=0, k_pcheck=0, k_u=0, k_ucheck=0,
                       regime='div', c_tau=0.25, label='divergence-based', solve='hybridize', table=True),
        'hdg-reduced': dict(q_family='vector', k_p=0, k_pcheck=0, k_u=1, k_ucheck=0,
                            regime='grad', c_eta=0.25, label='gradient-based', solve='pcheck', table=True),
        'hdg-kkk': dict(q_family='vector', k_p=0, k_pcheck=0, k_u=0, k_ucheck=0,
                        regime='manual', tau=1.0, eta=0.25, norm_regime='grad', label='not proved',
                        solve='hybridize', table=True),
        'mixed-dg': dict(q_family='vector', k_p=1, k_pcheck=None, k_u=0, k_ucheck=0,
                         regime='div', label='divergence-based', solve='both', table=True),
        'wg': dict(q_family='rt', k_p=0, k_pcheck=0, k_u=0, k_ucheck=1,
                   regime='div', label='divergence-based', solve='ucheck', table=True),
        'wg-mfem': dict(q_family='vector', k_p=0, k_pcheck=0, k_u=1, k_ucheck=0,
                        regime='grad', c_eta=0.25, label='gradient-based', solve='wg_phat', table=True),
        'ldg': dict(q_family='vector', k_p=0, k_pcheck=0, k_u=1, k_ucheck=None,
                    regime='grad', label='gradient-based', solve='both', table=True),
        'primal-limit': dict(q_family='vector', k_p=-1, k_pcheck=0, k_u=0, k_ucheck=-1,
                             regime='grad', label='gradient-based', solve='full', min_k=1),
        'mixed-limit': dict(q_family='rt', k_p=0, k_pcheck=0, k_u=0, k_ucheck=0,
                            regime='div', label='divergence-based', solve='full'),
    }
