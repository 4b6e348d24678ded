from .sampling import (
    classify,
    guided_score_source,
    sample_ancestral_fair,
    sample_mc,
    sample_reverse,
    write_samples_csv,
)
from .scores import (
    cfg_score,
    component_score,
    log_component_density,
    log_mixture_density,
    log_unconditional_density,
    marginal_component,
    mixture_score,
    posterior_weights,
    prop1_residual,
    true_score,
    unconditional_score,
)
from .world import (
    GaussianComponent,
    GuidanceConfig,
    MixtureWorld,
    NoiseSchedule,
    PromptMixture,
    load_world,
    random_world,
    save_world,
    two_component_world,
    world_from_dict,
    world_to_dict,
)

__all__ = [
    "GaussianComponent",
    "GuidanceConfig",
    "MixtureWorld",
    "NoiseSchedule",
    "PromptMixture",
    "cfg_score",
    "classify",
    "component_score",
    "guided_score_source",
    "load_world",
    "log_component_density",
    "log_mixture_density",
    "log_unconditional_density",
    "marginal_component",
    "mixture_score",
    "posterior_weights",
    "prop1_residual",
    "random_world",
    "sample_ancestral_fair",
    "sample_mc",
    "sample_reverse",
    "save_world",
    "true_score",
    "two_component_world",
    "unconditional_score",
    "world_from_dict",
    "world_to_dict",
    "write_samples_csv",
]
