package com.acme.io;

public class Printer {
    public void render(String doc) {
    }
}
