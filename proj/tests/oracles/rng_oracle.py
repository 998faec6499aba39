"""Pure-Python xoshiro256** / splitmix64 / FNV-1a reference.

Prints the first draws of a few generators; the numbers are frozen into
tests/test_tensor.cpp.
"""

MASK = (1 << 64) - 1


def splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK


def fnv1a(name):
    h = 0xCBF29CE484222325
    for b in name.encode():
        h ^= b
        h = (h * 0x100000001B3) & MASK
    return h


class Xoshiro:
    def __init__(self, seed):
        self.seed = seed
        st = seed
        self.s = []
        for _ in range(4):
            st, z = splitmix64(st)
            self.s.append(z)

    def next(self):
        s = self.s
        result = (rotl((s[1] * 5) & MASK, 7) * 9) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
        return result

    def stream(self, name, index=None):
        _, derived = splitmix64(self.seed ^ fnv1a(name))
        if index is None:
            return Xoshiro(derived)
        _, derived = splitmix64((derived + index * 0xD1B54A32D192ED03) & MASK)
        return Xoshiro(derived)


def show(label, gen, n=4):
    print(label, ", ".join("0x%016xULL" % gen.next() for _ in range(n)))


show("Rng(42)", Xoshiro(42))
show("Rng(0)", Xoshiro(0))
show("Rng(42).stream(mixup)", Xoshiro(42).stream("mixup"))
show("Rng(42).stream(draw, 3)", Xoshiro(42).stream("draw", 3))
g = Xoshiro(7)
print("Rng(7) first uniform", repr((g.next() >> 11) * 2.0**-53))
