import torch


def compute_logits(train_feats, train_labels, test_feats, clip_weights, indices, alpha0, alpha1, alpha2):
    #native: ape
    clip_logits = 100. * test_feats @ clip_weights

    label_onehot = torch.nn.functional.one_hot(train_labels).to(train_feats.dtype)
    zero_shot = (train_feats * clip_weights.t()[train_labels]).sum(dim=-1, keepdim=True)
    soft_labels = label_onehot * torch.exp(alpha2 * (zero_shot - 1))

    new_train = train_feats[:, indices]
    new_test = test_feats[:, indices]
    new_train = new_train / new_train.norm(dim=-1, keepdim=True)
    new_test = new_test / new_test.norm(dim=-1, keepdim=True)
    affinity = new_test @ new_train.t()
    cache_logits = torch.exp(-alpha1 * (1 - affinity)) @ soft_labels

    return clip_logits + alpha0 * cache_logits
