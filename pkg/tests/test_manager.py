"""Locomotion manager: command gating, transitions, gait sequencing."""

import math
from dataclasses import replace

import pytest

from emrs.core import BodyTwist, DomainError, LocomotionMode, RoverGeometry
from emrs.control import EMPTY_FAULTS, FaultFlag, FaultSet
from emrs.manager import (
    DEPLOY,
    ESTOP,
    STOW,
    WHEEL_WALK_START,
    WHEEL_WALK_STOP,
    Command,
    CommandKind,
    GaitParams,
    ManagerConfig,
    SimFeedback,
    StateKind,
    fold_pattern,
    handle_command,
    initial_state,
    point_turn_entry_angles,
    set_mode_command,
    step_manager,
    twist_command,
)
from emrs.suspension import default_suspension

GEOM = RoverGeometry()
CFG = ManagerConfig()
UNIT = default_suspension(GEOM)
PT_STEER = math.radians(54.1187644744229)


def run_until(state, pred, limit=5000, faults=EMPTY_FAULTS, feedback=None):
    """Step until pred(state) or the tick limit trips; returns (state, trace)."""
    trace = []
    for _ in range(limit):
        state, sp, events = step_manager(
            state, CFG.tick, GEOM, CFG, faults=faults, feedback=feedback
        )
        trace.append((state, sp, events))
        if pred(state):
            return state, trace
    raise AssertionError(f"predicate not reached in {limit} ticks; at {state.label}")


def drive_to_speed(twist, mode):
    """Fresh state in Driving(mode) with refs settled on the twist setpoints."""
    state = initial_state(GEOM, CFG, stowed=False)
    state, ok, _ = handle_command(state, set_mode_command(mode), GEOM, CFG)
    assert ok
    state, _ = run_until(state, lambda s: s.kind is StateKind.DRIVING)
    state, ok, _ = handle_command(state, twist_command(twist), GEOM, CFG)
    assert ok
    state, _ = run_until(
        state, lambda s: s.drive_refs == s.drive_targets and s.steer_refs == s.steer_targets
    )
    return state


class TestLifecycle:
    def test_initial_stowed_pose(self):
        state = initial_state(GEOM, CFG, stowed=True)
        assert state.kind is StateKind.STOWED
        assert state.steer_refs == fold_pattern(CFG, GEOM)
        assert state.susp_offsets == (-UNIT.active_range,) * 4

    def test_deploy_levels_suspension_before_steering(self):
        state = initial_state(GEOM, CFG, stowed=True)
        state, ok, reason = handle_command(state, DEPLOY, GEOM, CFG)
        assert ok and reason == "deploying"
        fold = fold_pattern(CFG, GEOM)
        state, trace = run_until(state, lambda s: s.kind is StateKind.IDLE)
        for s, _, _ in trace:
            if s.susp_offsets != (0.0,) * 4:
                assert s.steer_refs == fold
        assert state.steer_refs == (0.0,) * 4
        assert state.susp_offsets == (0.0,) * 4
        assert any("deployed" in ev for _, _, ev in trace)

    def test_deploy_rejected_when_not_stowed(self):
        state = initial_state(GEOM, CFG, stowed=False)
        state, ok, reason = handle_command(state, DEPLOY, GEOM, CFG)
        assert not ok
        assert "deploy only from Stowed" in reason

    def test_stow_folds_steering_then_lowers(self):
        state = initial_state(GEOM, CFG, stowed=False)
        state, ok, _ = handle_command(state, STOW, GEOM, CFG)
        assert ok
        fold = fold_pattern(CFG, GEOM)
        state, trace = run_until(state, lambda s: s.kind is StateKind.STOWED)
        for s, _, _ in trace:
            if s.steer_refs != fold:
                assert s.susp_offsets == (0.0,) * 4
        assert state.susp_offsets == (-UNIT.active_range,) * 4
        assert any("stowed" in ev for _, _, ev in trace)

    def test_stow_rejected_while_driving(self):
        state = drive_to_speed(BodyTwist(0.2, 0.0, 0.0), LocomotionMode.CRAB)
        _, ok, reason = handle_command(state, STOW, GEOM, CFG)
        assert not ok
        assert "stow only from Idle" in reason

    def test_idle_is_a_fixpoint(self):
        state = initial_state(GEOM, CFG, stowed=False)
        for _ in range(50):
            nxt, sp, events = step_manager(state, CFG.tick, GEOM, CFG)
            assert nxt == state
            assert sp.drive_speeds == (0.0,) * 4
            assert events == []
            state = nxt


class TestModeTransitions:
    def test_idle_to_crab(self):
        state = initial_state(GEOM, CFG, stowed=False)
        state, ok, reason = handle_command(
            state, set_mode_command(LocomotionMode.CRAB), GEOM, CFG
        )
        assert ok and reason == "transition to crab"
        assert state.label == "ModeTransition(idle->crab)"
        state, trace = run_until(state, lambda s: s.kind is StateKind.DRIVING)
        assert state.label == "Driving(crab)"
        assert any("state:Driving(crab)" in ev for _, _, ev in trace)

    def test_interlock_steering_waits_for_drive_stop(self):
        state = drive_to_speed(BodyTwist(0.3, 0.3, 0.0), LocomotionMode.CRAB)
        held = state.steer_refs
        assert held[0] == pytest.approx(math.pi / 4)
        assert max(abs(v) for v in state.drive_refs) > 1.0
        state, ok, _ = handle_command(
            state, set_mode_command(LocomotionMode.POINT_TURN), GEOM, CFG
        )
        assert ok
        assert state.label == "ModeTransition(crab->point_turn)"
        state, trace = run_until(state, lambda s: s.kind is StateKind.DRIVING)
        for s, _, _ in trace:
            if any(abs(v) > CFG.drive_stop_tol for v in s.drive_refs):
                assert s.steer_refs == held
        assert state.label == "Driving(point_turn)"
        assert state.steer_refs == point_turn_entry_angles(GEOM)

    def test_point_turn_entry_matches_tangent(self):
        angles = point_turn_entry_angles(GEOM)
        signs = (-1.0, 1.0, 1.0, -1.0)
        for got, sign in zip(angles, signs):
            assert got == pytest.approx(sign * PT_STEER, abs=1e-9)

    def test_feedback_speed_blocks_reorientation(self):
        state = drive_to_speed(BodyTwist(0.3, 0.3, 0.0), LocomotionMode.CRAB)
        held = state.steer_refs
        state, _, _ = handle_command(
            state, set_mode_command(LocomotionMode.SKID), GEOM, CFG
        )
        spinning = SimFeedback(drive_speeds=(0.5, 0.5, 0.5, 0.5))
        for _ in range(200):
            state, _, _ = step_manager(state, CFG.tick, GEOM, CFG, feedback=spinning)
        assert state.steer_refs == held
        assert state.kind is StateKind.MODE_TRANSITION
        stopped = SimFeedback()
        state, _ = run_until(
            state, lambda s: s.kind is StateKind.DRIVING, feedback=stopped
        )
        assert state.steer_refs == (0.0,) * 4

    def test_same_mode_is_a_noop(self):
        state = drive_to_speed(BodyTwist(0.2, 0.0, 0.0), LocomotionMode.CRAB)
        nxt, ok, reason = handle_command(
            state, set_mode_command(LocomotionMode.CRAB), GEOM, CFG
        )
        assert ok and reason == "already in mode"
        assert nxt == state

    def test_set_mode_rejected_mid_transition(self):
        state = drive_to_speed(BodyTwist(0.3, 0.0, 0.0), LocomotionMode.CRAB)
        state, _, _ = handle_command(
            state, set_mode_command(LocomotionMode.SKID), GEOM, CFG
        )
        _, ok, reason = handle_command(
            state, set_mode_command(LocomotionMode.CRAB), GEOM, CFG
        )
        assert not ok
        assert "mode change only from Driving or Idle" in reason


class TestTwistGating:
    def test_twist_rejected_outside_driving(self):
        idle = initial_state(GEOM, CFG, stowed=False)
        _, ok, reason = handle_command(
            idle, twist_command(BodyTwist(0.1, 0.0, 0.0)), GEOM, CFG
        )
        assert not ok and "twist only while Driving" in reason
        stowed = initial_state(GEOM, CFG, stowed=True)
        _, ok, reason = handle_command(
            stowed, twist_command(BodyTwist(0.1, 0.0, 0.0)), GEOM, CFG
        )
        assert not ok and reason == "not deployed"

    def test_inadmissible_twist_rejected(self):
        state = drive_to_speed(BodyTwist(0.2, 0.0, 0.0), LocomotionMode.CRAB)
        nxt, ok, reason = handle_command(
            state, twist_command(BodyTwist(0.2, 0.0, 0.1)), GEOM, CFG
        )
        assert not ok
        assert reason != ""
        assert nxt.twist == state.twist

    def test_over_limit_twist_rejected(self):
        state = drive_to_speed(BodyTwist(0.2, 0.0, 0.0), LocomotionMode.CRAB)
        _, ok, _ = handle_command(
            state, twist_command(BodyTwist(3.0, 0.0, 0.0)), GEOM, CFG
        )
        assert not ok

    def test_driving_tracks_twist_setpoints(self):
        state = drive_to_speed(BodyTwist(0.5, 0.0, 0.0), LocomotionMode.CRAB)
        expect = 0.5 / GEOM.wheel.radius
        for v in state.drive_refs:
            assert v == pytest.approx(expect)
        assert state.steer_refs == (0.0,) * 4

    def test_zero_twist_holds_steering(self):
        state = drive_to_speed(BodyTwist(0.3, 0.3, 0.0), LocomotionMode.CRAB)
        held = state.steer_refs
        state, ok, _ = handle_command(state, twist_command(BodyTwist()), GEOM, CFG)
        assert ok
        state, _ = run_until(state, lambda s: s.drive_refs == (0.0,) * 4)
        assert state.steer_refs == held

    def test_command_payload_validation(self):
        with pytest.raises(DomainError):
            Command(CommandKind.TWIST)
        with pytest.raises(DomainError):
            Command(CommandKind.SET_MODE)
        with pytest.raises(DomainError):
            Command(CommandKind.TWIST, twist=BodyTwist(float("nan"), 0.0, 0.0))


class TestFaultsAndEstop:
    def test_fault_zeroes_drives_within_one_tick(self):
        state = drive_to_speed(BodyTwist(0.5, 0.0, 0.0), LocomotionMode.CRAB)
        assert max(abs(v) for v in state.drive_refs) > 1.0
        faults = FaultSet.single(FaultFlag.OVERTORQUE, 1)
        state, sp, events = step_manager(state, CFG.tick, GEOM, CFG, faults=faults)
        assert state.kind is StateKind.FAULT
        assert sp.drive_speeds == (0.0,) * 4
        assert any(ev.startswith("state:Fault(") for ev in events)

    def test_fault_mid_transition(self):
        state = drive_to_speed(BodyTwist(0.3, 0.3, 0.0), LocomotionMode.CRAB)
        state, _, _ = handle_command(
            state, set_mode_command(LocomotionMode.POINT_TURN), GEOM, CFG
        )
        state, _, _ = step_manager(state, CFG.tick, GEOM, CFG)
        faults = FaultSet.single(FaultFlag.STALL, 2)
        state, sp, _ = step_manager(state, CFG.tick, GEOM, CFG, faults=faults)
        assert state.kind is StateKind.FAULT
        assert sp.drive_speeds == (0.0,) * 4

    def test_fault_latches_until_estop(self):
        state = drive_to_speed(BodyTwist(0.2, 0.0, 0.0), LocomotionMode.CRAB)
        faults = FaultSet.single(FaultFlag.OVERSPEED, 0)
        state, _, _ = step_manager(state, CFG.tick, GEOM, CFG, faults=faults)
        for cmd in (
            DEPLOY,
            STOW,
            WHEEL_WALK_START,
            set_mode_command(LocomotionMode.CRAB),
            twist_command(BodyTwist(0.1, 0.0, 0.0)),
        ):
            _, ok, reason = handle_command(state, cmd, GEOM, CFG)
            assert not ok
            assert reason == "fault latched; estop to reset"
        state, _, _ = step_manager(state, CFG.tick, GEOM, CFG, faults=faults)
        assert state.kind is StateKind.FAULT
        state, ok, reason = handle_command(state, ESTOP, GEOM, CFG)
        assert ok and reason == "fault reset"
        assert state.kind is StateKind.IDLE
        assert not state.faults

    def test_estop_ramps_at_emergency_rate(self):
        state = drive_to_speed(BodyTwist(0.5, 0.0, 0.0), LocomotionMode.CRAB)
        v0 = state.drive_refs[0]
        held = state.steer_refs
        state, ok, reason = handle_command(state, ESTOP, GEOM, CFG)
        assert ok and reason == "emergency stop"
        assert state.kind is StateKind.IDLE
        prev = v0
        ticks = 0
        while state.drive_refs != (0.0,) * 4:
            state, _, _ = step_manager(state, CFG.tick, GEOM, CFG)
            step = prev - state.drive_refs[0]
            assert step <= CFG.estop_decel * CFG.tick + 1e-12
            prev = state.drive_refs[0]
            ticks += 1
            assert ticks < 100
        assert ticks == math.ceil(v0 / (CFG.estop_decel * CFG.tick))
        assert state.steer_refs == held

    def test_estop_accepted_everywhere(self):
        states = [
            initial_state(GEOM, CFG, stowed=True),
            initial_state(GEOM, CFG, stowed=False),
            drive_to_speed(BodyTwist(0.2, 0.0, 0.0), LocomotionMode.CRAB),
        ]
        faulted, _, _ = step_manager(
            states[2], CFG.tick, GEOM, CFG,
            faults=FaultSet.single(FaultFlag.STALL, 0),
        )
        states.append(faulted)
        walking, _, _ = handle_command(states[1], WHEEL_WALK_START, GEOM, CFG)
        states.append(walking)
        for state in states:
            _, ok, _ = handle_command(state, ESTOP, GEOM, CFG)
            assert ok


class TestWheelWalking:
    def test_gait_engages_with_probe(self):
        state = initial_state(GEOM, CFG, stowed=False)
        state, ok, reason = handle_command(state, WHEEL_WALK_START, GEOM, CFG)
        assert ok and reason == "wheel walk start"
        state, sp, events = step_manager(state, CFG.tick, GEOM, CFG)
        assert "gait_phase:0" in events
        assert state.label == "WheelWalking(0)"

    def test_phase_cycle_and_timing(self):
        state = initial_state(GEOM, CFG, stowed=False)
        state, _, _ = handle_command(state, WHEEL_WALK_START, GEOM, CFG)
        boundaries = []
        for tick in range(1, int(11.0 / CFG.tick)):
            state, _, events = step_manager(state, CFG.tick, GEOM, CFG)
            for ev in events:
                if ev.startswith("gait_phase:"):
                    boundaries.append((tick, int(ev.split(":")[1])))
        phases = [p for _, p in boundaries]
        assert phases[:5] == [0, 1, 2, 3, 0]
        spacing = [t2 - t1 for (t1, _), (t2, _) in zip(boundaries, boundaries[1:])]
        expect = round(CFG.gait.phase_time / CFG.tick)
        assert all(s == expect for s in spacing)

    def test_drag_and_swing_drive_targets(self):
        gait = CFG.gait
        r = GEOM.wheel.radius
        state = initial_state(GEOM, CFG, stowed=False)
        state, _, _ = handle_command(state, WHEEL_WALK_START, GEOM, CFG)
        swing_mid = int((gait.shift_fraction + gait.lift_fraction + 0.5 * gait.swing_fraction)
                        * gait.phase_time / CFG.tick)
        for _ in range(1 + swing_mid):
            state, _, _ = step_manager(state, CFG.tick, GEOM, CFG)
        drag = gait.drag_speed / r
        swing = drag + gait.stride / (gait.swing_fraction * gait.phase_time) / r
        assert state.drive_targets[0] == pytest.approx(swing)
        for i in (1, 2, 3):
            assert state.drive_targets[i] == pytest.approx(drag)
        assert state.steer_targets == (0.0,) * 4

    def test_saddle_unload_pattern(self):
        state = initial_state(GEOM, CFG, stowed=False)
        state, _, _ = handle_command(state, WHEEL_WALK_START, GEOM, CFG)
        mid = int(0.5 * CFG.gait.phase_time / CFG.tick)
        for _ in range(1 + mid):
            state, _, _ = step_manager(state, CFG.tick, GEOM, CFG)
        susp = state.susp_targets
        lifted, diag = 0, 3
        for adjacent in (1, 2):
            assert susp[lifted] < susp[adjacent]
            assert susp[diag] < susp[adjacent]
        assert all(abs(s) <= UNIT.active_range + 1e-12 for s in susp)

    def test_cycle_advances_body_one_stride(self):
        gait = CFG.gait
        assert gait.drag_speed * 4.0 * gait.phase_time == pytest.approx(gait.stride)
        assert gait.drag_speed == pytest.approx(0.02)

    def test_stop_request_completes_phase(self):
        state = initial_state(GEOM, CFG, stowed=False)
        state, _, _ = handle_command(state, WHEEL_WALK_START, GEOM, CFG)
        state, _, _ = step_manager(state, CFG.tick, GEOM, CFG)
        for _ in range(30):
            state, _, _ = step_manager(state, CFG.tick, GEOM, CFG)
        state, ok, reason = handle_command(state, WHEEL_WALK_STOP, GEOM, CFG)
        assert ok and reason == "stopping after phase"
        assert state.kind is StateKind.WHEEL_WALKING
        state, trace = run_until(state, lambda s: s.kind is StateKind.IDLE)
        assert state.susp_targets == (0.0,) * 4
        walked = sum(1 for s, _, _ in trace if s.kind is StateKind.WHEEL_WALKING)
        assert walked == len(trace) - 1

    def test_stop_before_engagement_returns_idle(self):
        state = initial_state(GEOM, CFG, stowed=False)
        state, _, _ = handle_command(state, WHEEL_WALK_START, GEOM, CFG)
        state, ok, reason = handle_command(state, WHEEL_WALK_STOP, GEOM, CFG)
        assert ok and reason == "wheel walk stopped"
        assert state.kind is StateKind.IDLE

    def test_abort_on_untenable_slope(self):
        state = initial_state(GEOM, CFG, stowed=False)
        state, _, _ = handle_command(state, WHEEL_WALK_START, GEOM, CFG)
        hostile = SimFeedback(slope=math.radians(60.0), downhill_azimuth=math.pi)
        state, _, events = step_manager(state, CFG.tick, GEOM, CFG, feedback=hostile)
        assert "gait_abort" in events
        assert state.kind is StateKind.IDLE

    def test_walk_allowed_on_working_slope(self):
        state = initial_state(GEOM, CFG, stowed=False)
        state, _, _ = handle_command(state, WHEEL_WALK_START, GEOM, CFG)
        slope = SimFeedback(slope=math.radians(25.0), downhill_azimuth=math.pi)
        state, _, events = step_manager(state, CFG.tick, GEOM, CFG, feedback=slope)
        assert "gait_phase:0" in events
        for _ in range(int(10.0 / CFG.tick)):
            state, _, ev = step_manager(state, CFG.tick, GEOM, CFG, feedback=slope)
            assert "gait_abort" not in ev
        assert state.kind is StateKind.WHEEL_WALKING

    def test_gait_params_validation(self):
        with pytest.raises(DomainError):
            GaitParams(stride=-0.1)
        with pytest.raises(DomainError):
            GaitParams(shift_fraction=0.5, lift_fraction=0.3, swing_fraction=0.3)
        with pytest.raises(DomainError):
            GaitParams(unload_fraction=0.0)
        with pytest.raises(DomainError):
            GaitParams(phase_time=0.0)


class TestDeterminism:
    def script(self):
        return [
            (0, DEPLOY),
            (500, set_mode_command(LocomotionMode.CRAB)),
            (700, twist_command(BodyTwist(0.3, 0.1, 0.0))),
            (1200, twist_command(BodyTwist())),
            (1400, ESTOP),
            (1500, WHEEL_WALK_START),
            (2400, WHEEL_WALK_STOP),
        ]

    def run_trace(self):
        state = initial_state(GEOM, CFG, stowed=True)
        script = dict(self.script())
        out = []
        for tick in range(3000):
            if tick in script:
                state, ok, reason = handle_command(state, script[tick], GEOM, CFG)
                out.append(f"cmd@{tick}:{ok}:{reason}")
            state, sp, events = step_manager(state, CFG.tick, GEOM, CFG)
            out.append(f"{state.label}|{sp!r}|{events!r}")
        return "\n".join(out)

    def test_trace_is_reproducible(self):
        assert self.run_trace() == self.run_trace()

    def test_script_visits_expected_states(self):
        trace = self.run_trace()
        for label in (
            "Deploying", "Idle", "ModeTransition(idle->crab)", "Driving(crab)",
            "WheelWalking(0)", "WheelWalking(1)",
        ):
            assert label + "|" in trace or trace.count(label) > 0
