"""On-disk result cache keyed by a content hash of (operation, parameters, tolerances)."""

import hashlib
import json
import os


def content_key(operation, params, tolerances):
    blob = json.dumps({"op": operation, "params": params, "tol": tolerances},
                      sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()


class ResultCache:
    """JSON files under ``root``; a cache with an empty root is disabled."""

    def __init__(self, root):
        self.root = root or ""
        if self.root:
            os.makedirs(self.root, exist_ok=True)

    @property
    def enabled(self):
        return bool(self.root)

    def _path(self, key):
        return os.path.join(self.root, key + ".json")

    def get(self, key):
        if not self.enabled or not os.path.exists(self._path(key)):
            return None
        with open(self._path(key)) as fh:
            return json.load(fh)

    def put(self, key, value):
        if not self.enabled:
            return
        tmp = self._path(key) + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(value, fh)
        os.replace(tmp, self._path(key))

    def cached(self, operation, params, tolerances, compute):
        key = content_key(operation, params, tolerances)
        hit = self.get(key)
        if hit is not None:
            return hit
        value = compute()
        self.put(key, value)
        # hand back what a later hit would return
        return json.loads(json.dumps(value))
