"""Exception hierarchy shared by every tec module."""


class TecError(Exception):
    """Base class for all domain errors raised by this package."""


# keystream
class InvalidSeedMaterial(TecError, ValueError):
    pass


class InvalidSeed(TecError, ValueError):
    pass


class ReservedSeed(TecError, ValueError):
    pass


class PrecisionExhausted(TecError):
    pass


# codec
class PlanMismatch(TecError, ValueError):
    pass


class CiphertextTruncated(TecError, ValueError):
    pass


class MalformedPadding(TecError, ValueError):
    pass


class FillerMismatch(TecError, ValueError):
    """Filler bits differ from the ones the key dictates."""


class BadCiphertextFormat(TecError, ValueError):
    """A serialized ciphertext does not carry valid TEC1 framing."""


# fibonacci layer
class ValueOutOfRange(TecError, ValueError):
    pass


class FibDecodeError(TecError, ValueError):
    pass


# password store
class DuplicateUser(TecError):
    pass


class UnknownUser(TecError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class PolicyViolation(TecError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("password policy violated: " + ", ".join(self.violations))


class NoIdentifiers(TecError, ValueError):
    pass


class StoreCorrupt(TecError):
    pass


# protocol
class LoginInProgress(TecError):
    pass


class NoPendingLogin(TecError):
    pass


class ChallengeUndecryptable(TecError):
    pass


class FrameError(TecError, ValueError):
    pass


# cryptanalysis
class NotDecodable(TecError, ValueError):
    pass
