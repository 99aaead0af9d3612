"""Attribute-conditioned attentive face-aging GAN with a wavelet-packet
multi-pathway critic, trained and evaluated end-to-end on a synthetic,
oracle-verifiable aging corpus."""

__version__ = "0.1.0"
