from hazenet import params as ptree


def probe(tree, name, forward):
    """Loss as a function of one named parameter, for finite-difference checks.

    The returned callable swaps its argument into ``tree`` for the duration
    of ``forward()`` and restores the original tensor afterwards.
    """
    *path, leaf = name.split("/")

    def holder():
        node = tree
        for key in path:
            node = node[int(key)] if isinstance(node, list) else node[key]
        return node

    def loss(t):
        node = holder()
        saved = node[leaf]
        node[leaf] = t
        try:
            return forward()
        finally:
            node[leaf] = saved

    assert name in ptree.flatten(tree)
    return loss
