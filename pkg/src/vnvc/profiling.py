"""Analytic complexity accounting.

MACs are counted per layer from output geometry: a k x k convolution
producing C_out x H x W from C_in channels costs H*W*C_in*C_out*k^2/groups;
transposed convolutions count from their input geometry; linears count
in*out.  Wall-clock numbers come from the pipeline's stage timers and
exclude entropy decoding (reported separately).
"""

from contextlib import contextmanager

import torch
import torch.nn as nn


def _conv_macs(module: nn.Conv2d, out: torch.Tensor) -> int:
    kh, kw = module.kernel_size
    cin = module.in_channels // module.groups
    b, cout, h, w = out.shape
    return b * h * w * cout * cin * kh * kw


def _deconv_macs(module: nn.ConvTranspose2d, inp: torch.Tensor) -> int:
    kh, kw = module.kernel_size
    cout = module.out_channels // module.groups
    b, cin, h, w = inp.shape
    return b * h * w * cin * cout * kh * kw


def _linear_macs(module: nn.Linear, inp: torch.Tensor) -> int:
    batch = inp.numel() // inp.shape[-1]
    return batch * module.in_features * module.out_features


class MacCounter:
    """Accumulates MACs of every conv/deconv/linear forward under hooks."""

    def __init__(self, *modules: nn.Module):
        self.total = 0
        self._handles = []
        for root in modules:
            for m in root.modules():
                if isinstance(m, nn.Conv2d):
                    self._handles.append(m.register_forward_hook(self._on_conv))
                elif isinstance(m, nn.ConvTranspose2d):
                    self._handles.append(m.register_forward_hook(self._on_deconv))
                elif isinstance(m, nn.Linear):
                    self._handles.append(m.register_forward_hook(self._on_linear))

    def _on_conv(self, module, inputs, output):
        self.total += _conv_macs(module, output)

    def _on_deconv(self, module, inputs, output):
        self.total += _deconv_macs(module, inputs[0])

    def _on_linear(self, module, inputs, output):
        self.total += _linear_macs(module, inputs[0])

    def close(self):
        for h in self._handles:
            h.remove()
        self._handles = []


@contextmanager
def count_macs(*modules: nn.Module):
    counter = MacCounter(*modules)
    try:
        yield counter
    finally:
        counter.close()


def module_forward_macs(module: nn.Module, *inputs, call=None) -> int:
    """MACs of one forward pass (no_grad)."""
    with count_macs(module) as counter, torch.no_grad():
        if call is not None:
            call()
        else:
            module(*inputs)
    return counter.total
