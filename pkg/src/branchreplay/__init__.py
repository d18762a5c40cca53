"""branchreplay: record-and-replay defense for constant-time code.

Control-flow traces of crypto kernels are compressed offline into a
fixed-size bundle; at run time a small replay unit feeds recorded branch
targets to the front end instead of the speculative predictor. The
package bundles the compression pipeline, a cycle-approximate pipeline
simulator with a replay unit, and a bounded hardware-semantics checker
for the speculative-noninterference property.
"""

from branchreplay.errors import BranchReplayError

__version__ = "0.1.0"

__all__ = ["BranchReplayError", "__version__"]
