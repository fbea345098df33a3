package com.acme.io;

public interface Channel {
    void send(String msg);

    default void sendAll(java.util.List<String> msgs) {
        for (String m : msgs) {
            send(m);
        }
    }
}
