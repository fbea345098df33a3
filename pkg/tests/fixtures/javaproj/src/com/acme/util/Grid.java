package com.acme.util;

import java.util.HashMap;
import java.util.Map;

public class Grid {
    private final Map<String, Integer> cells;

    public Grid() {
        cells = new HashMap<String, Integer>();
        seed(cells);
    }

    private static void seed(Map<String, Integer> target) {
        target.put("origin", 0);
    }
}
