# -*- coding: utf-8 -*-
# Copyright (c) 2025, Al-Aswany and contributors
# For license information, please see license.txt

import logging
from multiprocessing import Pool

from tqdm.auto import tqdm

logger = logging.getLogger(__name__)


def ordered_map(func, items, n_jobs=1, progress=False, desc=None):
    """
    Map ``func`` over ``items`` and return results in input order.

    With ``n_jobs > 1`` the work is spread over a process pool. Each item
    carries its own seed, so the results do not depend on ``n_jobs``.

    Args:
        func (callable): Picklable module-level function
        items (list): Arguments, one per call
        n_jobs (int, optional): Number of worker processes
        progress (bool, optional): Show a progress bar
        desc (str, optional): Progress bar label

    Returns:
        list: ``[func(item) for item in items]``
    """
    items = list(items)
    if n_jobs <= 1 or len(items) <= 1:
        return [func(item) for item in tqdm(items, desc=desc, disable=not progress)]

    logger.debug("Running %d tasks on %d processes", len(items), n_jobs)
    with Pool(processes=n_jobs) as pool:
        return list(tqdm(pool.imap(func, items), total=len(items), desc=desc, disable=not progress))
