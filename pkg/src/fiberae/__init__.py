"""Autoencoder-shaped communication over a memoryless nonlinear fiber channel.

The package provides, as plain numpy code:

* ``channel``      -- the per-sample nonlinear phase-noise channel and its
                      exact reverse-mode gradient,
* ``nets``         -- a minimal dense-network engine (forward, backprop,
                      cross-entropy, Adam, gradient checking),
* ``autoencoder``  -- the trainable transmitter/channel/receiver stack with
                      power normalization and checkpointing,
* ``likelihood``   -- sampled per-symbol densities standing in for the
                      channel law, maximum-likelihood detection, and mutual
                      information estimation,
* ``evaluation``   -- QAM baselines, symbol-error-rate and information-rate
                      measurement, decision-region rasters, power sweeps,
* ``gradcheck``    -- finite-difference verification of every gradient path,
* ``cli``          -- the ``fiberae`` command-line front end.
"""

from fiberae.channel import (
    ChannelParams,
    PropagationTape,
    backprop_channel,
    dbm_from_watts,
    make_rng,
    propagate,
    propagate_tape,
    watts_from_dbm,
)

__version__ = "0.1.0"
