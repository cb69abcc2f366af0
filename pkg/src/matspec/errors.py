"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class MatspecError(Exception):
    exit_code = 3
    kind = "numerical"

    def to_dict(self):
        return {"error": type(self).__name__, "kind": self.kind, "message": str(self)}


class ValidationError(MatspecError):
    exit_code = 2
    kind = "validation"


class BandIncomplete(MatspecError):
    pass


class RankMismatch(MatspecError):
    pass


class NearEigenvalue(MatspecError):
    pass


class IllConditioned(MatspecError):
    def __init__(self, x, cond, limit):
        super().__init__(f"condition estimate {cond:.3e} exceeds {limit:.1e} at x={x:.6g}")
        self.x = x
        self.cond = cond


class DegenerateZ(MatspecError):
    pass


class ParseError(MatspecError):
    exit_code = 1
    kind = "parse"
