"""Small builders shared by the test modules."""

from pecman.geometry import Point2, WallSegment


def seg(x1, y1, x2, y2, id=0):
    return WallSegment(Point2(float(x1), float(y1)), Point2(float(x2), float(y2)), id)


def box(w, h):
    """Four boundary walls of a w x h room, ids 0..3."""
    return [seg(0, 0, w, 0, 0), seg(w, 0, w, h, 1), seg(w, h, 0, h, 2), seg(0, h, 0, 0, 3)]


# criterion number -> one-line verdict, printed in the terminal summary
ACCEPTANCE = {}
