"""motionforge: identity-decoupled motion representation learning and
diffusion-based motion sequence generation on a synthetic shapes corpus."""

__version__ = "0.1.0"
