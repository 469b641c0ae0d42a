class colorEnumerator:
    """
    Cycling palette for the gate figures: one color per scheme, stable order.
    """

    # colorblind-safe RGB triples
    colors = [
        [0, 114, 178],    # Blue
        [213, 94, 0],     # Orange
        [0, 158, 115],    # Teal
        [204, 121, 167],  # Magenta
        [86, 180, 233],   # Sky Blue
        [230, 159, 0],    # Amber
        [0, 0, 0],        # Black
        [100, 100, 100],  # Gray
    ]

    def __init__(self):
        self.normalized_colors = [[r/255, g/255, b/255] for r, g, b in self.colors]
        self.index = 0

    def next_color(self):
        """Next color as an RGB triple in [0, 1]; wraps around."""
        color = self.normalized_colors[self.index % len(self.normalized_colors)]
        self.index += 1
        return color
