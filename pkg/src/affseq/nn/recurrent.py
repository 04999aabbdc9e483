"""GRU and LSTM layers with exact backpropagation through time.

Gate conventions:
  GRU   z = sig(xW_z + hU_z + b_z); r = sig(xW_r + hU_r + b_r)
        h~ = tanh(xW_h + (r*h)U_h + b_h); h' = z*h + (1-z)*h~
        (the update gate carries the previous state)
  LSTM  i,f,o = sig(...); g = tanh(...); c' = f*c + i*g; h' = o*tanh(c')
        with the forget bias initialized to 1.

Input kernels are Glorot-uniform, recurrent kernels orthogonal, biases zero.
Input projections for the whole sequence are batched into single matmuls; the
recurrent part walks timesteps.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from .initializers import glorot_uniform, orthogonal
from .layers import Layer


def _sigmoid(x):
    # split by sign for numerical stability
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class GRULayer(Layer):
    _GATES = ("z", "r", "h")

    def __init__(
        self,
        in_dim: int,
        hidden_dim: int,
        name: str,
        rng: np.random.Generator,
        return_sequences: bool = True,
    ):
        super().__init__(name)
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        self.return_sequences = return_sequences
        for gate in self._GATES:
            self.params[f"W_{gate}"] = glorot_uniform(rng, in_dim, hidden_dim)
            self.params[f"U_{gate}"] = orthogonal(rng, hidden_dim, hidden_dim)
            self.params[f"b_{gate}"] = np.zeros(hidden_dim)
        self.zero_grads()

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[-1] != self.in_dim:
            raise DomainError(
                f"{self.name}: expected [batch x T x {self.in_dim}], got {x.shape}"
            )
        batch, steps, _ = x.shape
        p = self.params
        self._x = x
        xz = x @ p["W_z"] + p["b_z"]
        xr = x @ p["W_r"] + p["b_r"]
        xh = x @ p["W_h"] + p["b_h"]

        h = np.zeros((batch, self.hidden_dim))
        outputs = np.empty((batch, steps, self.hidden_dim))
        self._cache = []
        for t in range(steps):
            z = _sigmoid(xz[:, t] + h @ p["U_z"])
            r = _sigmoid(xr[:, t] + h @ p["U_r"])
            rh = r * h
            hh = np.tanh(xh[:, t] + rh @ p["U_h"])
            self._cache.append((z, r, hh, h, rh))
            h = z * h + (1.0 - z) * hh
            outputs[:, t] = h
        return outputs if self.return_sequences else h

    def backward(self, grad):
        p = self.params
        batch, steps, _ = self._x.shape
        if self.return_sequences:
            d_out = grad
        else:
            d_out = np.zeros((batch, steps, self.hidden_dim))
            d_out[:, steps - 1] = grad

        dxz = np.empty((batch, steps, self.hidden_dim))
        dxr = np.empty_like(dxz)
        dxh = np.empty_like(dxz)
        dh_next = np.zeros((batch, self.hidden_dim))
        for t in reversed(range(steps)):
            z, r, hh, h_prev, rh = self._cache[t]
            dh = d_out[:, t] + dh_next
            dz = dh * (h_prev - hh)
            dhh = dh * (1.0 - z)
            dh_prev = dh * z

            da_hh = dhh * (1.0 - hh**2)
            dxh[:, t] = da_hh
            self.grads["U_h"] += rh.T @ da_hh
            drh = da_hh @ p["U_h"].T
            dr = drh * h_prev
            dh_prev += drh * r

            da_z = dz * z * (1.0 - z)
            da_r = dr * r * (1.0 - r)
            dxz[:, t] = da_z
            dxr[:, t] = da_r
            self.grads["U_z"] += h_prev.T @ da_z
            self.grads["U_r"] += h_prev.T @ da_r
            dh_prev += da_z @ p["U_z"].T + da_r @ p["U_r"].T
            dh_next = dh_prev

        x2d = self._x.reshape(-1, self.in_dim)
        for gate, dxg in (("z", dxz), ("r", dxr), ("h", dxh)):
            g2d = dxg.reshape(-1, self.hidden_dim)
            self.grads[f"W_{gate}"] += x2d.T @ g2d
            self.grads[f"b_{gate}"] += g2d.sum(axis=0)
        return dxz @ p["W_z"].T + dxr @ p["W_r"].T + dxh @ p["W_h"].T


def gru_cell(x_t: np.ndarray, h_prev: np.ndarray, params: dict[str, np.ndarray]) -> np.ndarray:
    """Single GRU step on [batch x in] given the nine parameter tensors."""
    z = _sigmoid(x_t @ params["W_z"] + h_prev @ params["U_z"] + params["b_z"])
    r = _sigmoid(x_t @ params["W_r"] + h_prev @ params["U_r"] + params["b_r"])
    hh = np.tanh(x_t @ params["W_h"] + (r * h_prev) @ params["U_h"] + params["b_h"])
    return z * h_prev + (1.0 - z) * hh


class LSTMLayer(Layer):
    _GATES = ("i", "f", "o", "g")

    def __init__(
        self,
        in_dim: int,
        hidden_dim: int,
        name: str,
        rng: np.random.Generator,
        return_sequences: bool = True,
        forget_bias: float = 1.0,
    ):
        super().__init__(name)
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        self.return_sequences = return_sequences
        for gate in self._GATES:
            self.params[f"W_{gate}"] = glorot_uniform(rng, in_dim, hidden_dim)
            self.params[f"U_{gate}"] = orthogonal(rng, hidden_dim, hidden_dim)
            self.params[f"b_{gate}"] = np.zeros(hidden_dim)
        self.params["b_f"] = np.full(hidden_dim, forget_bias)
        self.zero_grads()

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[-1] != self.in_dim:
            raise DomainError(
                f"{self.name}: expected [batch x T x {self.in_dim}], got {x.shape}"
            )
        batch, steps, _ = x.shape
        p = self.params
        self._x = x
        pre = {g: x @ p[f"W_{g}"] + p[f"b_{g}"] for g in self._GATES}

        h = np.zeros((batch, self.hidden_dim))
        c = np.zeros((batch, self.hidden_dim))
        outputs = np.empty((batch, steps, self.hidden_dim))
        self._cache = []
        for t in range(steps):
            i = _sigmoid(pre["i"][:, t] + h @ p["U_i"])
            f = _sigmoid(pre["f"][:, t] + h @ p["U_f"])
            o = _sigmoid(pre["o"][:, t] + h @ p["U_o"])
            g = np.tanh(pre["g"][:, t] + h @ p["U_g"])
            c_new = f * c + i * g
            tanh_c = np.tanh(c_new)
            self._cache.append((i, f, o, g, h, c, tanh_c))
            h = o * tanh_c
            c = c_new
            outputs[:, t] = h
        return outputs if self.return_sequences else h

    def backward(self, grad):
        p = self.params
        batch, steps, _ = self._x.shape
        if self.return_sequences:
            d_out = grad
        else:
            d_out = np.zeros((batch, steps, self.hidden_dim))
            d_out[:, steps - 1] = grad

        dpre = {g: np.empty((batch, steps, self.hidden_dim)) for g in self._GATES}
        dh_next = np.zeros((batch, self.hidden_dim))
        dc_next = np.zeros((batch, self.hidden_dim))
        for t in reversed(range(steps)):
            i, f, o, g, h_prev, c_prev, tanh_c = self._cache[t]
            dh = d_out[:, t] + dh_next
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c**2) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_next = dc * f

            da = {
                "i": di * i * (1.0 - i),
                "f": df * f * (1.0 - f),
                "o": do * o * (1.0 - o),
                "g": dg * (1.0 - g**2),
            }
            dh_prev = np.zeros_like(dh)
            for gate in self._GATES:
                dpre[gate][:, t] = da[gate]
                self.grads[f"U_{gate}"] += h_prev.T @ da[gate]
                dh_prev += da[gate] @ p[f"U_{gate}"].T
            dh_next = dh_prev

        x2d = self._x.reshape(-1, self.in_dim)
        dx = np.zeros_like(self._x)
        for gate in self._GATES:
            g2d = dpre[gate].reshape(-1, self.hidden_dim)
            self.grads[f"W_{gate}"] += x2d.T @ g2d
            self.grads[f"b_{gate}"] += g2d.sum(axis=0)
            dx += dpre[gate] @ p[f"W_{gate}"].T
        return dx


class Bidirectional(Layer):
    """Run a forward and a reversed-time copy of a layer; concatenate features.

    Output width is twice the wrapped layer's hidden width.
    """

    def __init__(self, make_layer, name: str):
        super().__init__(name)
        self.fwd = make_layer(f"{name}.fwd")
        self.bwd = make_layer(f"{name}.bwd")
        if not (self.fwd.return_sequences and self.bwd.return_sequences):
            raise DomainError("bidirectional wrapping requires return_sequences layers")
        self.hidden_dim = self.fwd.hidden_dim + self.bwd.hidden_dim

    def sublayers(self):
        return [self.fwd, self.bwd]

    def param_count(self):
        return self.fwd.param_count() + self.bwd.param_count()

    def zero_grads(self):
        self.fwd.zero_grads()
        self.bwd.zero_grads()

    def forward(self, x, train=False):
        out_f = self.fwd.forward(x, train)
        out_b = self.bwd.forward(x[:, ::-1], train)[:, ::-1]
        self._split = out_f.shape[-1]
        return np.concatenate([out_f, out_b], axis=-1)

    def backward(self, grad):
        dx_f = self.fwd.backward(grad[..., : self._split])
        dx_b = self.bwd.backward(grad[..., self._split :][:, ::-1])[:, ::-1]
        return dx_f + dx_b
