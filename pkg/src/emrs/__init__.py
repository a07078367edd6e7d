"""Locomotion stack for a four wheel rover with independently steered,
independently driven wheels on parallelogram suspension arms.

Submodules:

- core: units, geometry, modes, configuration schema
- kinematics: inverse and forward wheel kinematics
- control: wheel speed and steering joint controllers, fault monitor
- suspension: passive deflection, static stability, posture control
- manager: locomotion state machine and command handling
- sim: quasi-static terrain simulation and scenario runner
- telemetry: wire format plus TCP and WebSocket servers
- cli: command line entry points
"""

from .core import (
    BodyTwist,
    ChassisModule,
    DomainError,
    LocomotionMode,
    Pose2D,
    RoverGeometry,
    WheelParams,
    breadboard_scale,
    default_modules,
    max_wheel_angular_speed,
    rover_from_json,
    rover_to_json,
)
from .kinematics import (
    InadmissibleTwist,
    SpeedLimitExceeded,
    WheelSetpoints,
    forward_twist,
    integrate_pose,
    inverse_kinematics,
    validate_twist,
)
from .manager import (
    Command,
    CommandKind,
    ManagerConfig,
    command_from_dict,
    command_to_dict,
    set_mode_command,
    twist_command,
)
from .sim import (
    RecordDecimator,
    Scenario,
    TelemetryRecord,
    World,
    bundled_scenario_names,
    load_scenario,
    log_to_text,
    metrics_to_csv,
    metrics_to_json,
    record_from_json,
    record_to_json,
    run_scenario,
    scenario_from_json,
    scenario_to_json,
    step_sim,
    world_metrics,
)
from .telemetry import (
    DEFAULT_PORT,
    DEFAULT_WS_PORT,
    DecodeError,
    TelemetryServer,
    decode_command,
    encode_ack,
    encode_command,
    encode_record,
    resolve_ports,
)

__all__ = [
    "BodyTwist",
    "ChassisModule",
    "DomainError",
    "LocomotionMode",
    "Pose2D",
    "RoverGeometry",
    "WheelParams",
    "breadboard_scale",
    "default_modules",
    "max_wheel_angular_speed",
    "rover_from_json",
    "rover_to_json",
    "InadmissibleTwist",
    "SpeedLimitExceeded",
    "WheelSetpoints",
    "forward_twist",
    "integrate_pose",
    "inverse_kinematics",
    "validate_twist",
    "Command",
    "CommandKind",
    "ManagerConfig",
    "command_from_dict",
    "command_to_dict",
    "set_mode_command",
    "twist_command",
    "RecordDecimator",
    "Scenario",
    "TelemetryRecord",
    "World",
    "bundled_scenario_names",
    "load_scenario",
    "log_to_text",
    "metrics_to_csv",
    "metrics_to_json",
    "record_from_json",
    "record_to_json",
    "run_scenario",
    "scenario_from_json",
    "scenario_to_json",
    "step_sim",
    "world_metrics",
    "DEFAULT_PORT",
    "DEFAULT_WS_PORT",
    "DecodeError",
    "TelemetryServer",
    "decode_command",
    "encode_ack",
    "encode_command",
    "encode_record",
    "resolve_ports",
]

__version__ = "0.1.0"
