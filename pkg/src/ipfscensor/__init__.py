"""Network-level censorship simulation for IPFS-like content networks."""

__version__ = "0.1.0"
