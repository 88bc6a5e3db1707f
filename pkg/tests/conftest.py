from .fixtures import (
    classify_config,
    corpus,
    scripted_hierarchy,
    sentiment_set,
    sentiment_vocab,
    small_config,
    small_model,
    toy_config,
    toy_hierarchy,
    toy_params,
)
