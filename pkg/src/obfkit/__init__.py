"""Interest-profile simulation, reconstruction and obfuscation toolkit."""

__version__ = "0.1.0"
