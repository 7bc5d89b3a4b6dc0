"""
Leave-one-out split: latest interaction for testing, second latest for
validation, the rest for training.
"""

import logging

from .models import DataIOError, InteractionLog, SplitDataset

logger = logging.getLogger(__name__)

MIN_EVAL_INTERACTIONS = 3


def leave_one_out_split(log: InteractionLog) -> SplitDataset:
    """
    Split a log per user in chronological order.

    Timestamp ties are ordered by input line (later line = later). Users
    with fewer than 3 interactions put everything into train and are not
    evaluated. The train log shares the full log's id table, so items seen
    only in validation/test keep their index.
    """
    if len(log) == 0:
        raise DataIOError("Cannot split an empty interaction log")

    train_records = []
    validation = {}
    test = {}
    eval_users = set()

    for user_id, history in log.by_user().items():
        if len(history) < MIN_EVAL_INTERACTIONS:
            train_records.extend(history)
            continue

        *train_part, validation_record, test_record = history
        train_records.extend(train_part)
        validation[user_id] = validation_record.item_id
        test[user_id] = test_record.item_id
        eval_users.add(user_id)

    train_records.sort(key=lambda r: r.sequence)
    logger.info(
        f"Leave-one-out split: {len(train_records)} train records, "
        f"{len(eval_users)} eval users, "
        f"{log.ids.n_users - len(eval_users)} train-only users"
    )

    return SplitDataset(
        train=InteractionLog(records=train_records, ids=log.ids),
        validation=validation,
        test=test,
        eval_users=eval_users,
    )
