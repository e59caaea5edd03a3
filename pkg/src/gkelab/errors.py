"""Exception types shared across the package."""


class GKEError(Exception):
    """Base class for every error raised by gkelab."""


class InvalidElement(GKEError):
    pass


class WideTagMisuse(GKEError):
    pass


class LengthMismatch(GKEError):
    pass


class RosterTooSmall(GKEError):
    pass


class DuplicateIdentity(GKEError):
    pass


class IdentityNotInRoster(GKEError):
    pass


class WrongPhase(GKEError):
    pass


class WrongVariant(GKEError):
    pass


class MissingMessages(GKEError):
    """Some member's broadcast for the current round is absent."""


class MissingRound1(MissingMessages):
    pass


class MissingRound2(MissingMessages):
    pass


class MissingKC(MissingMessages):
    pass


class UnexpectedMessage(GKEError):
    """A message came from a non-member, or a member sent twice."""


class PeerNotInRoster(GKEError):
    pass


class SelfPeer(GKEError):
    pass


class NotInSubgroup(GKEError):
    pass


class SubgroupTooSmall(GKEError):
    pass


class SubgroupNotSubsetOfRoster(GKEError):
    pass


class NotAnInsider(GKEError):
    pass


class InvalidScenario(GKEError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class MalformedTranscript(GKEError):
    pass


class RoundIncomplete(GKEError):
    """The bus was asked to deliver a round before every member posted."""
