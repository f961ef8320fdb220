"""Exception types raised across the package."""

from __future__ import annotations


class ContDefError(Exception):
    """Base class for all package errors."""


class DegenerateSimplex(ContDefError):
    """Points do not span a simplex of the requested dimension."""


class OffHyperplane(ContDefError):
    """A point lies outside the affine hull of a lower-dimensional simplex."""


class InvalidFeature(ContDefError):
    """Deformation features fall outside their admissible ranges."""


class SingularTransform(ContDefError):
    """The Jacobian of a homogeneous map is (numerically) singular."""


class OrientationReversing(ContDefError):
    """The Jacobian of a homogeneous map has negative determinant."""


class NotPositiveDefinite(ContDefError):
    """A recovered stretch tensor has a non-positive eigenvalue."""


class InvalidConfiguration(ContDefError):
    """A reference configuration violates its structural invariants."""


class ContainmentViolated(ContDefError):
    """A follower is not strictly inside its in-neighbor simplex."""

    def __init__(self, agent, weights):
        super().__init__(f"follower {agent} is not enclosed by its in-neighbors (weights {weights})")
        self.agent = agent
        self.weights = weights


class Unreachable(ContDefError):
    """Some non-leader node has no directed path from the leaders."""

    def __init__(self, agents):
        super().__init__(f"no directed path from the leaders to {sorted(agents)}")
        self.agents = sorted(agents)


class SingularA(ContDefError):
    """The follower block of the weight matrix is not invertible."""


class MissingNeighbor(ContDefError):
    """A follower's real in-neighbor position was not supplied."""


class SingularLinearization(ContDefError):
    """The quadcopter decoupling matrix lost rank."""


class GuardTripped(ContDefError):
    """A vehicle left the valid flight envelope during simulation."""

    def __init__(self, time, agent, reason):
        super().__init__(f"guard tripped at t={time:.4f}s for agent {agent}: {reason}")
        self.time = time
        self.agent = agent
        self.reason = reason


class InputSaturated(ContDefError):
    """A commanded input left the admissible set in hard-fail mode."""

    def __init__(self, time, agent, channel, value):
        super().__init__(f"input {channel}={value:.4g} out of bounds at t={time:.4f}s, agent {agent}")
        self.time = time
        self.agent = agent
        self.channel = channel
        self.value = value


class TooDense(ContDefError):
    """Reference separation leaves no room for any deviation bound."""


class AnglesNotConstant(ContDefError):
    """Deformation angles vary over time, so the relaxed bound does not apply."""


class OutOfSegment(ContDefError):
    """A time lies outside the segment being evaluated."""


class NoPath(ContDefError):
    """The search exhausted its open set without reaching the goal."""


class InvalidEndpoint(ContDefError):
    """A planning start or goal placement is itself invalid."""


class InfeasibleSegment(ContDefError):
    """No travel time up to the cap satisfies the segment constraints."""


class ParseError(ContDefError):
    """A scenario document could not be decoded."""


class SchemaError(ContDefError):
    """A scenario document is well-formed but violates the schema."""

    def __init__(self, errors):
        if isinstance(errors, tuple):
            errors = [errors]
        self.errors = list(errors)
        msg = "; ".join(f"{path}: {text}" for path, text in self.errors)
        super().__init__(msg)
