package org.example.io;

import java.io.IOException;
import java.io.InputStream;

public abstract class Throws {
    protected InputStream in;

    protected Throws(InputStream in) {
        this.in = in;
    }

    public abstract int read() throws IOException;

    public byte[] readFully(int len) throws IOException, IllegalStateException {
        byte[] buf = new byte[len];
        int off = 0;
        while (off < len) {
            int n = in.read(buf, off, len - off);
            if (n < 0) {
                throw new IOException("truncated");
            }
            off += n;
        }
        return buf;
    }
}
