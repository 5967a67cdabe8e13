"""Reference torch modules whose parameter names define the checkpoint
template the exporter accepts.

All modules run in float64 and mirror the target engine's semantics
exactly: gcn propagates with the degree-normalized adjacency including
self-loops, sage adds separate neighbor/self linear maps, gin mixes with a
scalar self weight before a 2-layer MLP.  Graph classification uses mean
pooling; the classifier's last layer has no activation.
"""

from __future__ import annotations

import torch
from torch import nn


def normalized_adjacency(adj: torch.Tensor) -> torch.Tensor:
    n = adj.shape[0]
    with_loops = adj + torch.eye(n, dtype=adj.dtype)
    inv_sqrt = with_loops.sum(dim=1).rsqrt()
    return inv_sqrt[:, None] * with_loops * inv_sqrt[None, :]


class GCNStack(nn.Module):
    def __init__(self, dims, clf_dims, with_bn=False):
        super().__init__()
        self.convs = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1]) for i in range(len(dims) - 1)
        )
        self.bns = nn.ModuleList(
            nn.BatchNorm1d(dims[i + 1]) for i in range(len(dims) - 1)
        ) if with_bn else None
        self.classifier = nn.ModuleList(
            nn.Linear(clf_dims[i], clf_dims[i + 1]) for i in range(len(clf_dims) - 1)
        )
        self.double()

    def forward(self, adj, x):
        v = normalized_adjacency(adj)
        h = x
        for i, lin in enumerate(self.convs):
            h = lin(v @ h)
            if self.bns is not None:
                h = self.bns[i](h)
            h = torch.relu(h)
        z = h.mean(dim=0, keepdim=True)
        for k, lin in enumerate(self.classifier):
            z = lin(z)
            if k < len(self.classifier) - 1:
                z = torch.relu(z)
        return z[0]


class SAGEStack(nn.Module):
    def __init__(self, dims, clf_dims):
        super().__init__()
        self.convs = nn.ModuleList()
        for i in range(len(dims) - 1):
            layer = nn.Module()
            layer.lin_neighbor = nn.Linear(dims[i], dims[i + 1], bias=True)
            layer.lin_self = nn.Linear(dims[i], dims[i + 1], bias=False)
            self.convs.append(layer)
        self.classifier = nn.ModuleList(
            nn.Linear(clf_dims[i], clf_dims[i + 1]) for i in range(len(clf_dims) - 1)
        )
        self.double()

    def forward(self, adj, x):
        h = x
        for layer in self.convs:
            h = torch.relu(layer.lin_neighbor(adj @ h) + layer.lin_self(h))
        z = h.mean(dim=0, keepdim=True)
        for k, lin in enumerate(self.classifier):
            z = lin(z)
            if k < len(self.classifier) - 1:
                z = torch.relu(z)
        return z[0]


class GINStack(nn.Module):
    def __init__(self, dims, clf_dims):
        super().__init__()
        self.convs = nn.ModuleList()
        for i in range(len(dims) - 1):
            layer = nn.Module()
            layer.eps = nn.Parameter(torch.zeros((), dtype=torch.float64))
            layer.mlp = nn.Sequential(
                nn.Linear(dims[i], dims[i + 1]),
                nn.ReLU(),
                nn.Linear(dims[i + 1], dims[i + 1]),
            )
            self.convs.append(layer)
        self.classifier = nn.ModuleList(
            nn.Linear(clf_dims[i], clf_dims[i + 1]) for i in range(len(clf_dims) - 1)
        )
        self.double()

    def forward(self, adj, x):
        n = adj.shape[0]
        a_hat = adj + torch.eye(n, dtype=adj.dtype)
        h = x
        for layer in self.convs:
            mixed = a_hat @ h + layer.eps * h
            h = torch.relu(layer.mlp[2](torch.relu(layer.mlp[0](mixed))))
        z = h.mean(dim=0, keepdim=True)
        for k, lin in enumerate(self.classifier):
            z = lin(z)
            if k < len(self.classifier) - 1:
                z = torch.relu(z)
        return z[0]


STACKS = {"gcn": GCNStack, "sage": SAGEStack, "gin": GINStack}


def build_stack(arch, dims, clf_dims, **kwargs):
    if arch not in STACKS:
        raise ValueError(f"unknown arch {arch!r}")
    return STACKS[arch](dims, clf_dims, **kwargs)
