"""Reference implementations of the compiled kernels, used when the extension is absent."""

import numpy as np


def q_backup(indptr, indices, data, reward, value, discount):
    products = np.asarray(data) * np.asarray(value)[np.asarray(indices)]
    sums = np.zeros(len(reward))
    rows = np.repeat(np.arange(len(reward)), np.diff(indptr))
    np.add.at(sums, rows, products)
    return np.asarray(reward) + discount * sums


def ci_gap(table):
    table = np.asarray(table)
    pe = table.sum(axis=(1, 2))
    live = pe > 0.0
    cond = table[live] / pe[live, None, None]
    outer = cond.sum(axis=2)[:, :, None] * cond.sum(axis=1)[:, None, :]
    return float(np.max(np.abs(cond - outer), initial=0.0))
