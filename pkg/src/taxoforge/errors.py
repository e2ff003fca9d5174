"""Exception hierarchy. Every domain error derives from TaxoforgeError so the
CLI can map it to exit status 1."""


class TaxoforgeError(Exception):
    pass


# configuration

class ConfigError(TaxoforgeError):
    pass


class MissingKey(ConfigError):
    def __init__(self, name):
        super().__init__(f"missing required config key: {name}")
        self.name = name


class ParseError(ConfigError):
    def __init__(self, msg, line, column):
        super().__init__(f"{msg} (line {line}, column {column})")
        self.line = line
        self.column = column


class InvalidValue(ConfigError):
    pass


# network / decoding

class HttpError(TaxoforgeError):
    def __init__(self, status, url=""):
        super().__init__(f"HTTP {status} for {url}" if url else f"HTTP {status}")
        self.status = status
        self.url = url


class TooManyRedirects(TaxoforgeError):
    pass


class Timeout(TaxoforgeError):
    pass


class DecodeError(TaxoforgeError):
    pass


# taxonomy

class GroupMissing(TaxoforgeError):
    def __init__(self, species_key):
        super().__init__(f"no ancestor at the group rank for species {species_key}")
        self.species_key = species_key


# imaging / gate

class Unconvertible(TaxoforgeError):
    pass


class BackendFailure(TaxoforgeError):
    pass


# storage / layout / eval

class CorruptLog(TaxoforgeError):
    def __init__(self, offset):
        super().__init__(f"corrupt state log record at offset {offset}")
        self.offset = offset


class SanitizeEmpty(TaxoforgeError):
    pass


class MissingHoldout(TaxoforgeError):
    def __init__(self, path):
        super().__init__(f"holdout file missing: {path}")
        self.path = path


class EmptyInput(TaxoforgeError):
    pass


class TrainerFailed(TaxoforgeError):
    pass


class NetworkError(TaxoforgeError):
    pass
