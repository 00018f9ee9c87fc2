"""Exception types shared across the package."""


class LoopdiffError(Exception):
    pass


class TooManyEvents(LoopdiffError):
    pass


class OutOfRange(LoopdiffError):
    pass


class MalformedSlot(LoopdiffError):
    pass


class ParseError(LoopdiffError):
    pass


class UnsupportedTimeSignature(ParseError):
    pass


class UnsatisfiablePrior(LoopdiffError):
    def __init__(self, positions, msg=None):
        self.positions = list(positions)
        super().__init__(msg or f"prior leaves zero mass at {self.positions[:8]}"
                         + ("..." if len(self.positions) > 8 else ""))


class ConflictingPrior(LoopdiffError):
    pass


class BoxTooSmall(LoopdiffError):
    pass


class EmptySelection(LoopdiffError):
    pass


class NoDownbeat(LoopdiffError):
    pass


class VersionMismatch(LoopdiffError):
    pass


class CorruptCheckpoint(LoopdiffError):
    pass


class NonFiniteGradient(LoopdiffError):
    pass


class NonFiniteActivation(LoopdiffError):
    pass


class ConfigError(LoopdiffError):
    pass
