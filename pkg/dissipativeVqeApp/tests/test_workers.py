import time
import unittest

from z2Project.workers import map_ordered


class MapOrderedTests(unittest.TestCase):

    def test_results_keep_input_order(self):
        def slow_square(n):
            time.sleep(0.01 * (5 - n))
            return n * n

        self.assertEqual(map_ordered(slow_square, range(5), max_workers=4), [0, 1, 4, 9, 16])
        self.assertEqual(map_ordered(slow_square, range(5), max_workers=1), [0, 1, 4, 9, 16])

    def test_empty_input(self):
        self.assertEqual(map_ordered(lambda n: n, [], max_workers=3), [])

    def test_errors_propagate(self):
        def fail(n):
            raise ValueError(n)

        with self.assertRaises(ValueError):
            map_ordered(fail, [1, 2], max_workers=2)
