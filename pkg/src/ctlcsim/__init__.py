"""ctlcsim — compile transfer graphs to timelocked contract batches and
execute them symbolically under honest and adversarial schedulers.

The usual pipeline, by module:

- `graph`: transfer graphs (users, tagged arcs, funds) and their JSON form
- `unfold`: a graph plus a leader becomes a tree of leader-rooted walks
- `outcomes`: which edge sets a tree may settle on, per user
- `synth`: a tree becomes a batch of chained timelocked contracts
- `semantics`: the small-step rules a network of TAMs actually follows
- `honest` / `adversary`: the strategies driving a run from either side
- `runner`: seeded end-to-end runs, trace serialization, replay
- `verifier`: mechanical certificates over finished runs
- `cli`: the `ctlcsim` command

The names most scripts need are re-exported here.
"""

from .graph import (
    Arc,
    Digraph,
    DomainError,
    GraphSpec,
    graph_spec_to_json,
    is_in_semiconnected,
    leaders,
    parse_graph_spec,
    random_graph_spec,
)
from .outcomes import canonical_projection, enumerate_outcomes, is_underwater
from .runner import SimResult, replay, run_protocol, serialize
from .synth import Batch, Ctlc, TreeSpec, compile_tree, spec_from_graph
from .unfold import Edge, Xtree, complete_graph_size_formula, unfold
from .verifier import Report, check_all

__version__ = "0.1.0"

__all__ = [
    "Arc",
    "Batch",
    "Ctlc",
    "Digraph",
    "DomainError",
    "Edge",
    "GraphSpec",
    "Report",
    "SimResult",
    "TreeSpec",
    "Xtree",
    "canonical_projection",
    "check_all",
    "compile_tree",
    "complete_graph_size_formula",
    "enumerate_outcomes",
    "graph_spec_to_json",
    "is_in_semiconnected",
    "is_underwater",
    "leaders",
    "parse_graph_spec",
    "random_graph_spec",
    "replay",
    "run_protocol",
    "serialize",
    "spec_from_graph",
    "unfold",
    "__version__",
]
