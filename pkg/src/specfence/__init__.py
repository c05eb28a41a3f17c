"""specfence: prove programs leak-free under speculation, or fence them until they are."""

from specfence.ir import Program, parse_program, pretty_print, validate
from specfence.threat import ThreatModel, VInstSet, compute_vinst, taint_map
from specfence.encode import (
    FenceSite,
    Placement,
    SpecMode,
    TransitionSystem,
    add_fence,
    encode_speculative,
    encode_standard,
    fence_sites,
)
from specfence.pdr import Engine, pdr_init
from specfence.repair import (
    RepairOptions,
    RepairResult,
    Trace,
    choose_fence,
    repair,
    speculative_split_point,
    verify,
)
from specfence.certificate import check_certificate, export_certificate

__all__ = [
    "Program", "parse_program", "pretty_print", "validate",
    "ThreatModel", "VInstSet", "compute_vinst", "taint_map",
    "TransitionSystem", "FenceSite", "Placement", "SpecMode",
    "encode_standard", "encode_speculative", "fence_sites", "add_fence",
    "Engine", "pdr_init",
    "RepairOptions", "RepairResult", "Trace", "repair", "verify",
    "choose_fence", "speculative_split_point",
    "export_certificate", "check_certificate",
]
