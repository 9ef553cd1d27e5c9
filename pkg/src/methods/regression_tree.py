import numpy as np

LEAF = -1


class RegressionTree:
    """
    Depth-limited least-squares regression tree with exact greedy splits.

    Split search maximises the reduction of the squared error; ties go to the
    lowest feature index and then to the lowest threshold. Leaves predict the
    mean target of their rows.

    Nodes are stored as flat arrays, children referenced by index,
    feature = -1 marks a leaf.
    """

    # Python constructor
    def __init__(self, max_depth=3, min_samples_leaf=1):
        self.max_depth        = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.feature   = []
        self.threshold = []
        self.left      = []
        self.right     = []
        self.value     = []

    def _new_node(self, value):
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        return len(self.value) - 1

    def _best_split(self, X, r):
        n = r.shape[0]
        total = np.sum(r)
        best = (0.0, None, None)   # gain, feature, threshold
        k = self.min_samples_leaf
        for j in range(X.shape[1]):
            order = np.argsort(X[:, j], kind='stable')
            x = X[order, j]
            s_left = np.cumsum(r[order])[:-1]
            n_left = np.arange(1, n)
            valid = (x[1:] > x[:-1]) & (n_left >= k) & (n - n_left >= k)
            if not np.any(valid):
                continue
            gain = s_left**2/n_left + (total - s_left)**2/(n - n_left) - total**2/n
            gain = np.where(valid, gain, -np.inf)
            pos = int(np.argmax(gain))   # first maximum is the lowest threshold
            if gain[pos] > best[0] + 1.0e-12:
                best = (gain[pos], j, 0.5*(x[pos] + x[pos+1]))
        return best

    def _grow(self, X, r, depth):
        node = self._new_node(float(np.mean(r)))
        if depth >= self.max_depth or r.shape[0] < 2*self.min_samples_leaf:
            return node
        gain, j, t = self._best_split(X, r)
        if j is None:
            return node
        mask = X[:, j] <= t
        self.feature[node] = j
        self.threshold[node] = t
        left = self._grow(X[mask], r[mask], depth + 1)
        right = self._grow(X[~mask], r[~mask], depth + 1)
        self.left[node] = left
        self.right[node] = right
        return node

    def fit(self, X, r):
        self._grow(X, np.asarray(r, dtype=np.float64), 0)
        self.feature   = np.array(self.feature, dtype=np.int64)
        self.threshold = np.array(self.threshold)
        self.left      = np.array(self.left, dtype=np.int64)
        self.right     = np.array(self.right, dtype=np.int64)
        self.value     = np.array(self.value)
        return self

    @property
    def n_nodes(self):
        return len(self.value)

    def depth(self, node=0):
        if self.feature[node] == LEAF:
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))

    def predict(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        for _ in range(self.max_depth):
            inner = self.feature[node] != LEAF
            if not np.any(inner):
                break
            f = np.where(inner, self.feature[node], 0)
            go_left = X[rows, f] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)
        return self.value[node]

    def to_array(self):
        """(n_nodes, 5) matrix feature, threshold, left, right, value."""
        return np.column_stack([self.feature, self.threshold, self.left, self.right, self.value]).astype(np.float64)

    @staticmethod
    def from_array(nodes, max_depth):
        tree = RegressionTree(max_depth)
        tree.feature   = nodes[:, 0].astype(np.int64)
        tree.threshold = nodes[:, 1].copy()
        tree.left      = nodes[:, 2].astype(np.int64)
        tree.right     = nodes[:, 3].astype(np.int64)
        tree.value     = nodes[:, 4].copy()
        return tree
