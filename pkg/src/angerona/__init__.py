"""Function-free probabilistic logic programs: exact inference, acyclicity
analysis, poly-tree compilation and a belief-based query-control PDP."""

from .analysis import analyze, derive_annotations, is_acyclic, is_relaxed_acyclic
from .bn import BayesianNetwork, bn_to_program, compile
from .core import CoreProgram, desugar
from .enforcement import PDP, AtkModel, Event, Policy, Secret, knowledge, parse_db, parse_policy, run_session
from .errors import AngeronaError
from .grounding import relaxed_ground
from .inference import Model
from .oracle import Oracle
from .polytree import PolytreeEngine, marginal, validate_polytree
from .rc import parse_sentence, pl_translate
from .syntax import Atom, Program, parse_atom, parse_program

__version__ = "0.1.0"

__all__ = [
    "AngeronaError", "AtkModel", "Atom", "BayesianNetwork", "CoreProgram", "Event", "Model", "Oracle", "PDP",
    "Policy", "PolytreeEngine", "Program", "Secret", "analyze", "bn_to_program", "compile", "derive_annotations",
    "desugar", "is_acyclic", "is_relaxed_acyclic", "knowledge", "marginal", "parse_atom", "parse_db", "parse_policy", "parse_program",
    "parse_sentence", "pl_translate", "relaxed_ground", "run_session", "validate_polytree",
]
