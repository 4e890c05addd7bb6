# This file is part of ts_ucacopf.
#
# Developed for Vera C. Rubin Observatory Telescope and Site Systems.
# This product includes software developed by the LSST Project
# (https://www.lsst.org).
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

__all__ = ["KernelPool", "concatenate_results"]

import dataclasses
import functools
import logging
import multiprocessing as mp

import numpy as np


def concatenate_results(results):
    """Concatenate per-chunk kernel results along the problem axis.

    Parameters
    ----------
    results : `list`
        Dataclass instances of one type, or arrays.
    """
    first = results[0]
    if dataclasses.is_dataclass(first):
        return dataclasses.replace(
            first,
            **{
                field.name: np.concatenate(
                    [getattr(result, field.name) for result in results], axis=0
                )
                for field in dataclasses.fields(first)
            },
        )
    return np.concatenate(results, axis=0)


class KernelPool:
    """Run kernels over batches of independent problems.

    Batches are split into contiguous chunks of ``chunk_size`` problems.
    The chunk boundaries do not depend on ``workers``, so the results are
    the same for any worker count.

    Parameters
    ----------
    workers : `int`, optional
        Number of worker processes; 1 runs every chunk in this process.
    chunk_size : `int`, optional
        Number of problems per chunk.
    mp_context : `str`, optional
        Multiprocessing start method, e.g. "spawn". None for the
        platform default.
    log : `logging.Logger`, optional
        Parent logger.
    """

    def __init__(self, workers=1, chunk_size=64, mp_context=None, log=None):
        if workers < 1:
            raise ValueError(f"workers={workers} must be >= 1")
        if chunk_size < 1:
            raise ValueError(f"chunk_size={chunk_size} must be >= 1")
        self.workers = workers
        self.chunk_size = chunk_size
        self.mp_context = mp_context
        if log is None:
            self.log = logging.getLogger("UcAcopf.pool")
        else:
            self.log = log.getChild("pool")
        self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *args):
        self.close()

    def close(self):
        """Shut down the worker processes, if any."""
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    @property
    def pool(self):
        if self._pool is None:
            self.log.debug("Starting %d worker processes", self.workers)
            self._pool = mp.get_context(self.mp_context).Pool(processes=self.workers)
        return self._pool

    def chunks(self, n_problems):
        """Slices of the chunks of a batch of ``n_problems``."""
        if n_problems == 0:
            return [slice(0, 0)]
        return [
            slice(start, min(start + self.chunk_size, n_problems))
            for start in range(0, n_problems, self.chunk_size)
        ]

    def run(self, kernel, batch, *per_problem, **shared):
        """Run ``kernel`` over a batch.

        Parameters
        ----------
        kernel : callable
            Called as ``kernel(batch_chunk, *per_problem_chunks, **shared)``;
            must be picklable when ``workers > 1``.
        batch
            Object with ``__len__`` and ``select(index)``, such as
            `GenBatch`.
        *per_problem : `numpy.ndarray`
            Arrays whose leading axis indexes problems, e.g. warm starts.
        **shared
            Keyword arguments passed unchanged to every chunk.

        Returns
        -------
        result
            The chunk results concatenated in order.
        """
        n_problems = len(batch)
        chunks = self.chunks(n_problems)
        self.log.debug(
            "Running %s on %d problems in %d chunks",
            getattr(kernel, "__name__", kernel),
            n_problems,
            len(chunks),
        )
        func = functools.partial(kernel, **shared) if shared else kernel
        arguments = [
            (batch.select(chunk),)
            + tuple(np.asarray(array)[chunk] for array in per_problem)
            for chunk in chunks
        ]
        if self.workers == 1 or len(arguments) <= 1:
            results = [func(*args) for args in arguments]
        else:
            results = self.pool.starmap(func, arguments)
        return concatenate_results(results)
