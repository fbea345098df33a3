package com.acme.core;

import com.acme.util.Text;

/** Drives the processing loop. */
public class Engine {
    private final Parts parts = new Parts();

    public void start() {
        init();
        run(3);
    }

    private void init() {
        Text.clean("x");
    }

    public void run(int n) {
        if (n > 0) {
            run(n - 1);
        }
        step();
    }

    private void step() {
        helperOverload(1);
        helperOverload(1, 2);
    }

    private void helperOverload(int a) {
    }

    private void helperOverload(int a, int b) {
    }
}
