"""Counter-based random streams with a fixed, documented bit recipe.

Raw words come from the Philox-4x64-10 counter generator (numpy's
``Philox``, keyed by ``(stream << 64) | seed``). Conversions are spelled out
here so that another implementation can reproduce every draw:

* uniform in (0, 1): ``((r >> 11) + 0.5) * 2**-53``
* standard normal: Box-Muller on consecutive uniform pairs ``(u1, u2)``,
  emitting ``sqrt(-2 ln u1) cos(2 pi u2)`` then ``sqrt(-2 ln u1) sin(2 pi u2)``
"""

from __future__ import annotations

import numpy as np

STREAM_CORRELATION = 1
STREAM_BALL = 2
STREAM_LASSO = 3


class CounterRNG:
    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must lie in [0, 2**64)")
        if not 0 <= stream < 2 ** 64:
            raise ValueError("stream must lie in [0, 2**64)")
        self.seed = seed
        self.stream = stream
        self._bits = np.random.Philox(key=(int(stream) << 64) | seed)

    def raw(self, k: int) -> np.ndarray:
        return self._bits.random_raw(k).astype(np.uint64)

    def uniforms(self, k: int) -> np.ndarray:
        r = self.raw(k)
        return ((r >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53

    def normals(self, k: int) -> np.ndarray:
        pairs = (k + 1) // 2
        u = self.uniforms(2 * pairs).reshape(pairs, 2)
        rad = np.sqrt(-2.0 * np.log(u[:, 0]))
        ang = 2.0 * np.pi * u[:, 1]
        z = np.empty((pairs, 2))
        z[:, 0] = rad * np.cos(ang)
        z[:, 1] = rad * np.sin(ang)
        return z.reshape(-1)[:k]
