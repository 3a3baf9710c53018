import hashlib
import logging

import numpy as np

logger = logging.getLogger(__name__)


class RandomStream:
    """Детерминированный поток случайных чисел.

    Алгоритм зафиксирован: PCG64 из numpy, равномерные числа берутся из
    ``Generator.random()`` (53-битные double в [0, 1)). Одинаковый seed даёт
    одинаковую последовательность на любой платформе.
    """

    def __init__(self, seed):
        """
        Инициализация потока.

        Args:
            seed (int): Неотрицательное целое зерно
        """
        if seed < 0:
            raise ValueError(f"Зерно должно быть неотрицательным: {seed}")
        self.seed = int(seed)
        self.draws = 0
        self._generator = np.random.Generator(np.random.PCG64(self.seed))

    @classmethod
    def derive(cls, seed, name):
        """
        Создаёт именованный подпоток, зависящий только от (seed, name).

        Args:
            seed (int): Глобальное зерно
            name (str): Имя подпотока (например, имя агента)

        Returns:
            RandomStream: Независимый поток
        """
        digest = hashlib.sha256(f"{seed}-{name}".encode("utf-8")).hexdigest()
        return cls(int(digest, 16) % 2**64)

    def random(self) -> float:
        self.draws += 1
        return float(self._generator.random())

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def poisson(self, lam: float) -> int:
        self.draws += 1
        return int(self._generator.poisson(lam))
