"""Exception types shared across the simulator."""


class ApsdError(Exception):
    """Base class for all simulator errors."""


class WornOut(ApsdError):
    def __init__(self, block):
        super().__init__(f"block {block} reached its erase limit")
        self.block = block


class MappedOut(ApsdError):
    def __init__(self, block):
        super().__init__(f"block {block} is mapped out")
        self.block = block


class AlreadyMappedOut(ApsdError):
    def __init__(self, block):
        super().__init__(f"block {block} is already mapped out")
        self.block = block


class AlreadyProgrammed(ApsdError):
    def __init__(self, block, page):
        super().__init__(f"page ({block}, {page}) already programmed since last erase")
        self.block, self.page = block, page


class LimitExceeded(ApsdError):
    def __init__(self, block, page):
        super().__init__(f"partial program limit reached on page ({block}, {page})")
        self.block, self.page = block, page


class DeviceFull(ApsdError):
    pass


class Unmapped(ApsdError):
    def __init__(self, lpa):
        super().__init__(f"lpa {lpa} is not mapped")
        self.lpa = lpa


class NotEncrypted(ApsdError):
    def __init__(self, ppa):
        super().__init__(f"physical page {ppa} holds no key")
        self.ppa = ppa


class InvalidPolicy(ApsdError):
    pass


class InvalidConfig(ApsdError):
    pass


class ParseError(ApsdError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class CorruptSnapshot(ApsdError):
    pass


class DivisionUndefined(ApsdError):
    pass
