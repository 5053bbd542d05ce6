"""Greedy dual-accumulator summation for low-bitwidth integer and E4M3 dot products.

Modules: ``fp8`` (E4M3 codec and product terms), ``quant`` (integer
quantization), ``accum`` (summation strategies), ``overflow_model`` (CLT and
Markov-chain overflow estimates), ``dmac`` (MAC event and energy-proxy
simulation), ``experiments`` / ``cli`` (CSV sweeps).
"""

__version__ = "0.1.0"
