class SVGFError(Exception):
    '''Base class for every error raised by the simulation scripts'''


class ConfigurationError(SVGFError, ValueError):
    '''Invalid experiment configuration or grid layout. The message starts with the offending key.'''


class InputError(SVGFError, ValueError):
    '''Numerical input outside the domain of an operation (non-positive target, overflow, ...)'''


class DomainError(SVGFError, ValueError):
    '''Formula evaluated outside its range of validity (e.g. the polynomial rate curve at s = 1)'''


class StateCorruptionError(SVGFError):
    '''Solver state no longer satisfies its invariants (mass mismatch between rho and pi)'''


class CFLViolation(SVGFError):
    '''An upwind step would lose positivity with the requested time step'''

    def __init__(self, courant, message=None):
        self.courant = courant
        super().__init__(message or f"upwind step rejected: Courant coefficient {courant:.6g} exceeds 1")

    def __reduce__(self):
        return type(self), (self.courant, str(self))


class SolverAbort(SVGFError):
    '''Non-finite values appeared during a run; dump_path points to the last finite state if one was written'''

    def __init__(self, message, dump_path=None):
        self.message = message
        self.dump_path = dump_path
        if dump_path is not None:
            message = f"{message} (state dumped to {dump_path})"
        super().__init__(message)

    def __reduce__(self):
        return type(self), (self.message, self.dump_path)


class FitError(SVGFError, ValueError):
    '''Rate fit impossible on the requested window'''


class CSVParseError(SVGFError, ValueError):
    '''Malformed CSV input. line is 1-based and counts the header line.'''

    def __init__(self, path, line, reason):
        self.path = path
        self.line = line
        self.reason = reason
        super().__init__(f"{path}:{line}: {reason}")

    def __reduce__(self):
        return type(self), (self.path, self.line, self.reason)
