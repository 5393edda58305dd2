from .biases import (
    BIAS_NAMES,
    BiasBounds,
    BiasVector,
    BoundsError,
    MappingConstants,
    PixelParams,
    map_bias_to_params,
)
from .scene import FlickerSource, NoiseSpec, SceneError, SceneScript, TargetSpec
from .simulator import (
    EVENT_DTYPE,
    PixelState,
    SensorSimulator,
    apply_bias,
    empty_stream,
    simulate_events,
)
