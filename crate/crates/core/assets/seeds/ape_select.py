import torch


def feat_selection(clip_weights, train_feats, w0, w1, topk):
    #native: ape_select
    # clip_weights: [d, C], train_feats: [C, K, d] grouped by class
    feats = train_feats.mean(dim=1)
    feats = feats / feats.norm(dim=-1, keepdim=True)
    text = clip_weights.t()
    num_classes = text.shape[0]
    off_diag = (num_classes * num_classes - num_classes)

    vis_sim = feats.unsqueeze(1) * feats.unsqueeze(0)
    txt_sim = text.unsqueeze(1) * text.unsqueeze(0)
    eye = torch.eye(num_classes, dtype=torch.bool).unsqueeze(-1)
    vis_sim = vis_sim.masked_fill(eye, 0).sum(dim=(0, 1)) / off_diag
    txt_sim = txt_sim.masked_fill(eye, 0).sum(dim=(0, 1)) / off_diag
    inter_class = vis_sim + txt_sim

    variance = text.var(dim=0, unbiased=False)
    criterion = w1 * variance - w0 * inter_class
    _, indices = torch.topk(criterion, k=topk)
    return torch.sort(indices).values
