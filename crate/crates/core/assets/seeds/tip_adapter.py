import torch


def compute_logits(train_feats, train_labels, test_feats, clip_weights, indices, alpha0, alpha1, alpha2):
    #native: tip_adapter
    clip_logits = 100. * test_feats @ clip_weights
    label_onehot = torch.nn.functional.one_hot(train_labels).to(train_feats.dtype)
    affinity = test_feats @ train_feats.t()
    cache_logits = torch.exp(-alpha1 * (1 - affinity)) @ label_onehot
    return clip_logits + alpha0 * cache_logits
