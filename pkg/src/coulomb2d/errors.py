"""Exception hierarchy shared by all modules."""


class Coulomb2DError(Exception):
    """Base class; ``module`` names the subsystem that raised."""

    module = "coulomb2d"

    def __str__(self):
        return f"{self.module}: {super().__str__()}"


class PotentialError(Coulomb2DError):
    module = "potential"


class OutsideDomain(PotentialError):
    pass


class PoleAtOrigin(PotentialError):
    pass


class NotHeleShaw(PotentialError):
    pass


class DropletTouchesWall(PotentialError):
    pass


class BadParameters(PotentialError):
    pass


class QuadratureFailure(Coulomb2DError):
    module = "oracle"


class ConfigError(Coulomb2DError):
    module = "config"


class ParseError(ConfigError):
    """Carries every problem found, each tagged with its line number."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class SupportViolation(Coulomb2DError):
    module = "diagnostics"


class NoConvergence(Coulomb2DError):
    module = "thermal"

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
