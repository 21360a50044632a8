"""Regenerates the fixture scenes, lights, trajectories and configs in this directory."""

import math
from pathlib import Path

HERE = Path(__file__).resolve().parent


class Mesh:
    def __init__(self):
        self.vertices = []
        self.groups = []  # (material, [faces])

    def vertex(self, p):
        self.vertices.append(p)
        return len(self.vertices)

    def quad(self, material, a, b, c, d):
        """Counter-clockwise when seen from the side the normal points to."""
        ids = [self.vertex(p) for p in (a, b, c, d)]
        self._add(material, [ids])

    def box(self, material, lo, hi):
        (x0, y0, z0), (x1, y1, z1) = lo, hi
        self.quad(material, (x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1))  # +z
        self.quad(material, (x1, y0, z0), (x0, y0, z0), (x0, y1, z0), (x1, y1, z0))  # -z
        self.quad(material, (x1, y0, z1), (x1, y0, z0), (x1, y1, z0), (x1, y1, z1))  # +x
        self.quad(material, (x0, y0, z0), (x0, y0, z1), (x0, y1, z1), (x0, y1, z0))  # -x
        self.quad(material, (x0, y1, z1), (x1, y1, z1), (x1, y1, z0), (x0, y1, z0))  # +y
        self.quad(material, (x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1))  # -y

    def _add(self, material, faces):
        if self.groups and self.groups[-1][0] == material:
            self.groups[-1][1].extend(faces)
        else:
            self.groups.append((material, faces))

    def write(self, path, title):
        triangles = sum(len(f) - 2 for _, faces in self.groups for f in faces)
        lines = [f"# {title}", f"# triangles: {triangles}"]
        lines += [f"v {x:g} {y:g} {z:g}" for x, y, z in self.vertices]
        for material, faces in self.groups:
            lines.append(f"usemtl {material}")
            lines += ["f " + " ".join(str(i) for i in f) for f in faces]
        path.write_text("\n".join(lines) + "\n")


def vec(v):
    return "[" + ", ".join(repr(float(c)) for c in v) + "]"


def write_lights(path, lights, materials, background):
    out = [f"background = {vec(background)}", "", "[materials]"]
    out += [f"{name} = {vec(rgb)}" for name, rgb in materials.items()]
    for pos, intensity in lights:
        out += ["", "[[lights]]", f"position = {vec(pos)}", f"intensity = {vec(intensity)}"]
    path.write_text("\n".join(out) + "\n")


def write_trajectory(path, keyframes):
    out = []
    for frame, pos, target in keyframes:
        out += ["[[keyframes]]", f"frame = {frame}", f"position = {vec(pos)}",
                f"target = {vec(target)}", "up = [0.0, 1.0, 0.0]", ""]
    path.write_text("\n".join(out))


def tri_room():
    m = Mesh()
    m.quad("floor", (-10, 0, 10), (10, 0, 10), (10, 0, -10), (-10, 0, -10))
    m.quad("wall", (-10, 0, -10), (10, 0, -10), (10, 8, -10), (-10, 8, -10))
    m.quad("wall", (-10, 0, 10), (-10, 0, -10), (-10, 8, -10), (-10, 8, 10))
    m.box("red", (-3.5, 0, -4), (-1.5, 2, -2))
    m.box("blue", (2.25, 0, -5.75), (3.75, 4, -4.25))
    m.box("green", (-0.75, 2.5, -0.75), (0.75, 2.75, 0.75))
    m.write(HERE / "tri-room.obj", "room: floor, two walls, two boxes and a floating slab")
    write_lights(
        HERE / "tri-room.toml",
        [((-4, 7, 4), (0.9, 0.85, 0.8)), ((5, 6, 2), (0.5, 0.55, 0.7)), ((0, 7.5, -6), (0.4, 0.4, 0.4))],
        {"floor": (0.75, 0.75, 0.7), "wall": (0.8, 0.78, 0.72), "red": (0.85, 0.2, 0.15),
         "blue": (0.2, 0.3, 0.85), "green": (0.25, 0.8, 0.3)},
        (0.25, 0.35, 0.55),
    )
    eye = (0, 3.5, 9)
    write_trajectory(HERE / "tri-room-pan.toml", [(0, eye, (-6, 1, -4)), (239, eye, (6, 1, -4))])
    write_trajectory(HERE / "tri-room-static.toml", [(0, eye, (0, 1, -3))])
    orbit = []
    for i in range(9):
        a = math.radians(-60 + 15 * i)
        orbit.append((30 * i, (9 * math.sin(a), 4, 9 * math.cos(a)), (0, 1, -2)))
    write_trajectory(HERE / "tri-room-orbit.toml", orbit)


def pan_wall():
    m = Mesh()
    m.quad("wall", (-20, -8, -9), (20, -8, -9), (20, 8, -9), (-20, 8, -9))
    m.box("box", (0, -0.5, -5.5), (1, 0.5, -4.5))
    # Slats behind the camera shade horizontal bands of the wall from the
    # first light only; they never appear in view.
    for y0, y1 in ((2.3, 2.5), (2.9, 3.1), (3.5, 3.7)):
        m.quad("slat", (-30, y0, 3), (30, y0, 3), (30, y1, 3), (-30, y1, 3))
    m.write(HERE / "pan-wall.obj", "wall with a floating box and off-screen slats")
    write_lights(
        HERE / "pan-wall.toml",
        [((-3, 4, 6), (0.9, 0.9, 0.9)), ((3, -2, 6), (0.6, 0.5, 0.4))],
        {"wall": (0.8, 0.8, 0.8), "box": (0.9, 0.5, 0.2), "slat": (0.5, 0.5, 0.5)},
        (0.0, 0.0, 0.0),
    )
    # 0.05 world units per frame is one pixel per frame on the wall at 180 rows
    # with tan(fov / 2) = 0.5.
    write_trajectory(HERE / "pan-wall-pan.toml", [(0, (-2, 0, 0), (-2, 0, -9)), (120, (4, 0, 0), (4, 0, -9))])


if __name__ == "__main__":
    tri_room()
    pan_wall()
