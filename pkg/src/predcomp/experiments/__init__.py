from .report import emit_report
from .runner import RunRecord, SweepRow, orbit_deviation, replay_run, run_scenario, sweep_tau_max
from .scenario import Scenario, dump_scenario, load_scenario, resolve_scenario
