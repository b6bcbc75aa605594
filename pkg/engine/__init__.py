from .model import (
    NumericalDomainError,
    Basis,
    Quadrature,
    PiecewiseLinear,
    ChannelSpec,
    PilotTone,
    FilterConfig,
    ChannelPlan,
    LinkParams,
    FiniteSizeParams,
    NoiseProfile,
    ChannelRate,
    RateReport,
    validate_plan,
    check_plan_design_rules,
    fiber_transmittance,
    channel_noise,
    total_noise,
)
from .config_io import (
    ConfigError,
    SystemConfig,
    load_config,
    save_config,
    save_overlay,
    parse_config_text,
    dump_config_text,
    config_digest,
)
from .dsp_chain import (
    SampleRateError,
    Waveform,
    SymbolRecord,
    SymbolRecordSet,
    FilterSpec,
    DiscreteFilter,
    DemuxPath,
    derive_rng,
    generate_gaussian_symbols,
    nrz_waveform,
    design_bessel_lpf,
    filter_magnitude,
    apply_filter,
    upconvert,
    downconvert,
    fdm_mux,
    fdm_demux,
    sample_symbols,
    symbol_response,
    crosstalk_ratio,
    min_if_for_rate,
)
from .channel_detector import (
    DetectionConfig,
    HomodyneDetector,
    apply_channel,
    calibrate_shot_noise,
    homodyne_detect,
    simulate_link,
    simulate_both_bases,
)
from .estimation import (
    ChannelEstimate,
    estimate_channel,
    normal_quantile,
    worst_case_bounds,
    worst_basis,
)
from .security_rates import (
    SecurityInputs,
    KeyRate,
    VmodOptimum,
    g,
    mutual_information,
    holevo_bound,
    holevo_bound_covariance,
    symplectic_eigenvalues,
    finite_size_delta,
    skr_finite,
    skr_asymptotic,
    finite_bounds,
    channel_rate,
    rate_from_estimate,
    total_skr,
    max_distance,
    optimize_vmod,
    evaluate_plan,
    plan_total,
    plan_reach,
    multiplexing_gain,
    symbol_rate_gain,
)
from .waveform_io import (
    save_waveform,
    load_waveform,
    save_records,
    load_records,
    write_table,
    read_table,
)
