"""Exception types shared across the package."""


class PlenopticError(Exception):
    """Base class for all package errors."""


class DegenerateProjection(PlenopticError):
    """A projection line is parallel to its target plane, or collapses to a point."""


class InvalidCone(PlenopticError):
    """The apex of a half-cone lies inside or on its base ball."""


class InvalidIntrinsics(PlenopticError):
    pass


class AtFocalPlane(PlenopticError):
    """The thin-lens map is singular: the point sits on the front focal plane."""


class DepthBelowMinimum(PlenopticError):
    """A depth estimate at or below the minimum admissible depth."""


class DegeneratePrefactor(PlenopticError):
    pass


class NoIntersection(PlenopticError):
    """A ray from the optical centre misses the scene surface."""


class OutOfSubimage(PlenopticError):
    """A retinal-plane lookup falls outside the lenslet's circular subimage."""


class DegenerateOrientation(PlenopticError):
    pass


class ConfigError(PlenopticError):
    pass
