"""The durable-opacity oracle on three hand-built histories.

The oracle brute-forces the definition: complete or drop pending
operations, erase crashes, and search for a sequential ordering that
respects real-time order and reads like a single-threaded memory.

Run:  python3 demos/03_opacity_oracle.py
"""
from durastm import histories as H
from durastm.opacity import durably_opaque

VALUES = range(2)

serial = (
    H.inv_begin(1), H.res_begin(1),
    H.inv_write(1, 0, 1), H.res_write(1),
    H.inv_commit(1), H.res_commit(1),
    H.inv_begin(2), H.res_begin(2),
    H.inv_read(2, 0), H.res_read(2, 1),      # sees the committed 1
)

dirty_read = (
    H.inv_begin(1), H.res_begin(1),
    H.inv_write(1, 0, 1), H.res_write(1),
    H.inv_begin(2), H.res_begin(2),
    H.inv_read(2, 0), H.res_read(2, 1),      # sees 1 before any commit
    H.inv_commit(1), H.res_commit_abort(1),  # ... and 1 never commits
)

lost_on_crash = (
    H.inv_begin(1), H.res_begin(1),
    H.inv_write(1, 0, 1), H.res_write(1),
    H.inv_commit(1), H.res_commit(1),        # durably committed ...
    H.CRASH,
    H.inv_begin(2), H.res_begin(2),
    H.inv_read(2, 0), H.res_read(2, 0),      # ... yet gone after the crash
)

for name, h in (("serial write then read", serial),
                ("dirty read of an aborted write", dirty_read),
                ("committed write lost at a crash", lost_on_crash)):
    verdict = durably_opaque(h, VALUES)
    print(f"{name}: {'durably opaque' if verdict.ok else 'VIOLATION'}")
    if not verdict.ok:
        print(f"  first failing prefix: {verdict.failing_prefix} "
              f"operations ({verdict.reason})")
